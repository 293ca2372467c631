import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semnav.planning import (
    PlannerConfig,
    corners,
    inflate,
    plan_path,
    planning_grid,
    polyline_length,
    resample,
    segment_free,
    shortcut,
    terrain_costs,
)
from semnav.sim.scenarios import flat_world, grass_shortcut_world, walled_in_world


def test_terrain_costs_default_and_override():
    w = grass_shortcut_world()
    reg = w.registry
    c = terrain_costs(w)
    assert set(np.unique(c[w.classes == reg.id("pavement")])) == {1.0}
    assert set(np.unique(c[w.classes == reg.id("grass")])) == {3.0}
    c0 = terrain_costs(w, {"grass": 0.0})
    assert set(np.unique(c0[w.classes == reg.id("grass")])) == {1.0}
    if (w.classes == reg.id("wall")).any():
        assert np.isinf(c[w.classes == reg.id("wall")]).all()


def test_inflation_blocks_neighbours_and_edges():
    cost = np.ones((9, 9))
    cost[4, 4] = np.inf
    out = inflate(cost, 1.0)
    assert np.isinf(out[4, 3]) and np.isinf(out[3, 4]) and np.isfinite(out[3, 3])
    assert np.isinf(out[0]).all() and np.isinf(out[:, -1]).all()
    assert np.isfinite(out[2, 2])


def test_corners_drops_collinear_points():
    pts = np.array([[0, 0], [1, 0], [2, 0], [2, 1], [2, 2], [3, 3]], dtype=float)
    np.testing.assert_array_equal(corners(pts), [[0, 0], [2, 0], [2, 2], [3, 3]])


def test_shortcut_straightens_free_space():
    grid = np.ones((20, 20))
    pts = np.array([[1.0, 1.0], [5.0, 1.0], [5.0, 5.0], [9.0, 9.0]])
    np.testing.assert_array_equal(shortcut(pts, grid, 1.0), [[1, 1], [9, 9]])


def test_segment_free_detects_block_and_map_edge():
    grid = np.ones((10, 10))
    grid[5, :] = np.inf
    assert not segment_free(grid, (2.0, 2.0), (2.0, 8.0), 1.0)
    assert segment_free(grid, (2.0, 2.0), (8.0, 2.0), 1.0)
    assert not segment_free(grid, (2.0, 2.0), (12.0, 2.0), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.integers(0, 1000))
def test_resample_spacing(spacing, seed):
    pts = np.cumsum(np.random.default_rng(seed).uniform(0.1, 2.0, size=(6, 2)), axis=0)
    pts = np.vstack([[0.0, 0.0], pts])
    out = resample(pts, spacing)
    assert len(out) == int(math.floor(polyline_length(pts) / spacing + 1e-9))
    if len(out) > 1:
        # chord never longer than arc
        assert (np.hypot(*np.diff(out, axis=0).T) <= spacing + 1e-9).all()


def test_resample_fixed_count_clamps_at_end():
    out = resample(np.array([[0.0, 0.0], [2.0, 0.0]]), 1.2, n=3)
    np.testing.assert_allclose(out, [[1.2, 0], [2.0, 0], [2.0, 0]])


def test_flat_world_path_is_straight():
    w = flat_world()
    res = plan_path(w, w.start, w.goal)
    assert res is not None
    assert res.length == pytest.approx(math.dist(w.start, w.goal), rel=1e-6)


def test_walled_in_goal_unreachable():
    w = walled_in_world()
    assert plan_path(w, w.start, w.goal) is None


def test_grass_cost_changes_route():
    w = grass_shortcut_world()
    cheap = plan_path(w, w.start, w.goal, class_costs={"grass": 0.0})
    dear = plan_path(w, w.start, w.goal, class_costs={"grass": 2.0})
    assert cheap.length < dear.length


def test_planning_grid_matches_inflated_terrain():
    w = grass_shortcut_world()
    cfg = PlannerConfig()
    np.testing.assert_array_equal(planning_grid(w, cfg), inflate(terrain_costs(w), cfg.inflation / w.cell_size))
