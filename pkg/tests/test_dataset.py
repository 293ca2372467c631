import math
import os
from dataclasses import replace

import numpy as np
import pytest

from semnav.dataset import (
    DatasetConfig,
    GroundTruthPath,
    diversity_filter,
    frontier_cells,
    plan_ground_truth,
    read_dataset,
    slice_runs,
    slice_times,
    two_mode_samples,
    write_dataset,
)
from semnav.geometry_filter import FilterConfig, filter_collisions
from semnav.sim.robot import RobotState
from semnav.sim.scenarios import flat_world
from semnav.sim.sensors import crop_elevation
from semnav.sim.world import ClassRegistry, world_from_layers


def corridor_world():
    reg = ClassRegistry()
    g = np.full((100, 200), reg.id("wall"), dtype=np.int64)  # 40 x 20 m at 0.2 m cells
    g[40:60, :] = reg.id("pavement")  # 4 m wide corridor along x
    return world_from_layers(g, reg, 0.2, start=(5.0, 10.0), goal=(35.0, 10.0))


def straight_states(world, duration, speed=1.2, dt=0.1):
    x0, y0 = world.start
    return [RobotState(x0 + speed * k * dt, y0, 0.0, speed, 0.0, k * dt) for k in range(int(round(duration / dt)) + 1)]


def strict_hits(world, pts, step=0.05):
    strict = world.strict_mask()
    hits = 0
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(math.ceil(math.dist(a, b) / step)), 1)
        for t in np.arange(n + 1) / n:
            x, y = a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])
            hits += bool(strict[int(y // world.cell_size), int(x // world.cell_size)])
    return hits


# ---------------------------------------------------------------- diversity


def gt(end, length):
    traj = np.array([[0.0, 0.0], end])
    return GroundTruthPath(np.array([[0.0, 0.0], [length, 0.0]]), traj, float(np.hypot(*end)))


def test_diversity_examples():
    a = np.array([[1.0, 0.0], [2.0, 0.0]])
    assert len(diversity_filter([a, a.copy()])) == 1
    b = a + [0.0, 0.4]
    assert len(diversity_filter([a, b])) == 1
    c = a + [0.0, 0.6]
    assert len(diversity_filter([a, c])) == 2


def test_diversity_keeps_shortest_first():
    long_ = gt([5.0, 0.0], 9.0)
    short = gt([5.0, 0.2], 6.0)
    assert diversity_filter([long_, short]) == [short]


def test_diversity_rescan_property():
    rng = np.random.default_rng(0)
    for _ in range(100):
        paths = [np.cumsum(rng.uniform(-1, 1, size=(3, 2)), axis=0) for _ in range(int(rng.integers(1, 12)))]
        kept = diversity_filter(paths, 0.5)
        ends = [p[-1] for p in kept]
        for i in range(len(ends)):
            for j in range(i):
                assert np.hypot(*(ends[i] - ends[j])) > 0.5
        # every path (kept or dropped) is within 0.5 m of a kept endpoint
        for p in paths:
            assert min(np.hypot(*(p[-1] - e)) for e in ends) <= 0.5


# ---------------------------------------------------------------- ground truth


def test_frontier_one_cell_per_bin_cheapest():
    dist = np.full((5, 5), np.inf)
    dist[2, 4] = 3.0
    dist[3, 4] = 2.0  # same bearing bin at bin width 90 degrees, cheaper
    dist[2, 0] = 1.0
    cells = frontier_cells(dist, (2.5, 2.5), 1.0, 2.5, 0.5, 0.0, 90.0)
    assert sorted(cells) == [(2, 0), (3, 4)]


def test_flat_world_fans_out_within_band():
    w = flat_world(width_m=60.0, height_m=60.0, start=(30.0, 30.0), goal=(50.0, 30.0))
    cfg = DatasetConfig()
    pose = RobotState(30.0, 30.0, 0.3)
    paths = plan_ground_truth(w, pose, cfg)
    assert len(paths) == 360 / cfg.bearing_bin_deg
    for p in paths:
        assert 0.9 * cfg.r_max - 1e-9 <= p.endpoint_distance <= cfg.r_max + 1e-9
        assert p.trajectory.shape == (cfg.n_waypoints, 2)
        step = np.hypot(*np.diff(np.vstack([[0.0, 0.0], p.trajectory]), axis=0).T)
        np.testing.assert_allclose(step[:-1], cfg.cruise_speed, atol=1e-9)


def test_corridor_paths_stay_in_corridor():
    w = corridor_world()
    pose = RobotState(20.0, 10.0, 0.0)
    paths = plan_ground_truth(w, pose)
    assert paths
    for p in paths:
        assert strict_hits(w, p.path) == 0
        assert np.all(np.abs(p.path[:, 1] - 10.0) < 2.0)
    ends = [p.path[-1, 0] for p in paths]
    assert min(ends) < 20.0 < max(ends)  # both directions of the corridor


def test_slice_count_for_a_sixty_second_run():
    assert len(slice_times(60.0, 0.5, 5.0)) == 110
    assert slice_times(4.0) == []
    assert slice_times(6.0) == [5.0, 5.5]


def test_slice_runs_samples_are_valid_and_deterministic():
    w = flat_world()
    states = straight_states(w, 7.0)
    cfg = DatasetConfig(n_points=64)
    a = list(slice_runs(w, states, w.goal, cfg, seed=3))
    b = list(slice_runs(w, states, w.goal, cfg, seed=3))
    assert len(a) == 4
    for s, t in zip(a, b):
        assert s.equals(t)
        assert s.lidar.shape == (cfg.n_lidar, cfg.n_points, 4)
        assert s.history.shape == (cfg.n_history, 4)
        assert np.all(np.abs(s.history[:, 2:]) <= 1.0)
        assert s.meta["m"] == len(s.gt) >= 1
        pose = RobotState(*s.meta["pose"][:3])
        elev = crop_elevation(w, pose, FilterConfig().extent, FilterConfig().res)
        assert len(filter_collisions(list(s.gt), elev)[0]) == len(s.gt)
        ends = s.gt[:, -1]
        d = np.hypot(*(ends[:, None] - ends[None]).transpose(2, 0, 1))
        assert (d[~np.eye(len(ends), dtype=bool)] > 0.5).all()


# ---------------------------------------------------------------- serialization


def test_round_trip_bitwise(tmp_path):
    samples = two_mode_samples(3, n_points=32)
    samples[0].heatmap = np.random.default_rng(0).normal(size=(4, 4))
    write_dataset(tmp_path / "d", samples)
    back, manifest = read_dataset(tmp_path / "d")
    assert manifest["count"] == 3 and manifest["m_distribution"] == {"2": 3}
    for s, t in zip(samples, back):
        assert s.equals(t)


def test_empty_dataset_round_trips(tmp_path):
    write_dataset(tmp_path / "e", [])
    assert read_dataset(tmp_path / "e")[0] == []


def test_manifest_mismatch_rejected(tmp_path):
    write_dataset(tmp_path / "d", two_mode_samples(2, n_points=16))
    os.remove(tmp_path / "d" / "sample_000001.bin")
    with pytest.raises(ValueError):
        read_dataset(tmp_path / "d")


def test_config_hash_tracks_every_parameter():
    base = DatasetConfig()
    assert base.hash() == DatasetConfig().hash()
    changed = {replace(base, **{f: v}).hash() for f, v in
               [("r_max", 14.0), ("fde_min", 0.4), ("interval", 0.25), ("n_points", 128), ("warmup", 4.0)]}
    assert base.hash() not in changed and len(changed) == 5
