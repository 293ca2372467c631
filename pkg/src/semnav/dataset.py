"""Synthetic training data: multi-goal ground truth, diversity filtering,
run slicing and on-disk serialization."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .executive import ExecutiveConfig, oracle_rollout
from .geometry_filter import FilterConfig, filter_collisions
from .navae import smoothed_obstacle_map
from .perception import build_heatmap, cloud_in_frame, history_matrix, polar_goal
from .planning import (PlannerConfig, cells_to_xy, corners, extract_path, planning_grid, polyline_length, resample,
                       shortcut, terrain_costs, unblock_start)
from .segmentation import label_points
from .sim.robot import RobotState, wrap_angle
from .sim.scenarios import two_mode_trajectories, two_mode_world
from .sim.sensors import LidarConfig, crop_classes, crop_elevation, sample_pointcloud

SAMPLE_FORMAT = "semnav-sample/1"


@dataclass(frozen=True)
class DatasetConfig:
    r_max: float = 15.0
    frontier_inner: float = 0.9  # frontier band = [inner, 1] * r_max
    bearing_bin_deg: float = 15.0
    fde_min: float = 0.5
    n_waypoints: int = 12
    dt: float = 1.0
    cruise_speed: float = 1.2
    interval: float = 0.5
    warmup: float = 5.0
    n_lidar: int = 3
    n_history: int = 10
    n_points: int = 256
    map_size: int = 90
    map_res: float = 0.2
    min_run_length: float = 25.0

    def hash(self):
        raw = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()


# ---------------------------------------------------------------- ground truth


@dataclass
class GroundTruthPath:
    path: np.ndarray  # (P, 2) world metres, planner polyline from the pose
    trajectory: np.ndarray  # (N_w, 2) robot frame, resampled at cruise speed
    endpoint_distance: float  # straight-line distance of the frontier goal from the pose


def frontier_cells(dist, pose_cell_xy, cell_size, r_max, inner, heading, bin_deg):
    """Cheapest reachable cell per bearing bin inside the frontier band.

    Returns a list of (row, col) in bin order.
    """
    H, W = dist.shape
    rows, cols = np.nonzero(np.isfinite(dist))
    cx = (cols + 0.5) * cell_size - pose_cell_xy[0]
    cy = (rows + 0.5) * cell_size - pose_cell_xy[1]
    r = np.hypot(cx, cy)
    band = (r >= inner * r_max) & (r <= r_max)
    rows, cols, cx, cy = rows[band], cols[band], cx[band], cy[band]
    if rows.size == 0:
        return []
    bearing = np.array([wrap_angle(a - heading) for a in np.arctan2(cy, cx)])
    n_bins = int(round(360.0 / bin_deg))
    b = np.floor((bearing + math.pi) / (2 * math.pi) * n_bins).astype(np.int64) % n_bins
    out = []
    for k in range(n_bins):
        sel = np.nonzero(b == k)[0]
        if sel.size == 0:
            continue
        d = dist[rows[sel], cols[sel]]
        best = sel[np.lexsort((cols[sel], rows[sel], d))[0]]
        out.append((int(rows[best]), int(cols[best])))
    return out


def plan_ground_truth(world, pose: RobotState, cfg: DatasetConfig = DatasetConfig(),
                      planner_cfg: PlannerConfig = PlannerConfig(), grid=None):
    """Planner paths from ``pose`` to frontier cells within ``r_max`` (one per bearing bin)."""
    cs = world.cell_size
    base_full = terrain_costs(world, None, planner_cfg.soft_weight)
    grid_full = planning_grid(world, planner_cfg) if grid is None else grid
    # restrict the search to a window around the pose
    pad = int(math.ceil((cfg.r_max + 2.0) / cs))
    pr, pc = int(pose.y // cs), int(pose.x // cs)
    r0, r1 = max(pr - pad, 0), min(pr + pad + 1, world.shape[0])
    c0, c1 = max(pc - pad, 0), min(pc + pad + 1, world.shape[1])
    grid = grid_full[r0:r1, c0:c1]
    base = base_full[r0:r1, c0:c1]
    s = (pr - r0, pc - c0)
    if not (0 <= s[0] < grid.shape[0] and 0 <= s[1] < grid.shape[1]):
        return []
    grid = unblock_start(grid, base, s, planner_cfg.inflation / cs + 1)
    dist, parent = kernels.grid_dijkstra(grid, s)
    local_pose = (pose.x - c0 * cs, pose.y - r0 * cs)
    goals = frontier_cells(dist, local_pose, cs, cfg.r_max, cfg.frontier_inner, pose.heading, cfg.bearing_bin_deg)
    W = grid.shape[1]
    out = []
    for g in goals:
        cells = extract_path(parent, g[0] * W + g[1], s[0] * W + s[1])
        if not cells:
            continue
        pts = cells_to_xy(cells, cs)
        pts[0] = local_pose
        pts = shortcut(corners(pts), grid, cs, base)
        pts_world = pts + np.array([c0 * cs, r0 * cs])
        rx, ry = pose.to_robot_frame(pts_world[:, 0], pts_world[:, 1])
        local = np.stack([rx, ry], axis=-1)
        traj = resample(local, cfg.cruise_speed * cfg.dt, cfg.n_waypoints)
        end = pts_world[-1]
        out.append(GroundTruthPath(pts_world, traj, float(math.hypot(end[0] - pose.x, end[1] - pose.y))))
    return out


def diversity_filter(paths, fde_min=0.5):
    """Greedy retention, shortest first: keep a path iff its endpoint is more
    than ``fde_min`` from every kept endpoint."""
    def traj(p):
        return np.asarray(getattr(p, "trajectory", p), dtype=float)

    def length(p):
        return polyline_length(p.path) if hasattr(p, "path") else polyline_length(traj(p))

    order = sorted(range(len(paths)), key=lambda i: (length(paths[i]), i))
    kept = []
    for i in order:
        end = traj(paths[i])[-1]
        if all(float(np.hypot(*(end - traj(paths[j])[-1]))) > fde_min for j in kept):
            kept.append(i)
    return [paths[i] for i in kept]


# ---------------------------------------------------------------- samples


@dataclass
class TrainingSample:
    lidar: np.ndarray  # (N_l, N_p, 4) current robot frame
    history: np.ndarray  # (N_v, 4)
    goal: np.ndarray  # (2,) polar
    gt: np.ndarray  # (M, N_w, 2) robot frame
    classes: np.ndarray  # (S, S) int16 robot-centred class slice (-1 outside the world)
    labels: np.ndarray  # (N_p,) traversability labels of the newest cloud
    keep: np.ndarray  # (N_p,) bool, points below the height filter
    meta: dict = field(default_factory=dict)
    heatmap: np.ndarray | None = None

    def arrays(self):
        out = {"lidar": self.lidar, "history": self.history, "goal": self.goal, "gt": self.gt,
               "classes": self.classes, "labels": self.labels, "keep": self.keep}
        if self.heatmap is not None:
            out["heatmap"] = self.heatmap
        return out

    def equals(self, other):
        a, b = self.arrays(), other.arrays()
        return (a.keys() == b.keys() and self.meta == other.meta
                and all(a[k].dtype == b[k].dtype and a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes()
                        for k in a))


def _state_at(states, t):
    """Latest rollout state with time <= t (states are dt-spaced)."""
    times = np.array([s.t for s in states])
    k = int(np.searchsorted(times, t + 1e-9, side="right")) - 1
    return states[max(k, 0)]


def slice_times(duration, interval=0.5, warmup=5.0):
    n = int(math.floor((duration - warmup) / interval + 1e-9))
    return [warmup + i * interval for i in range(max(n, 0))]


def make_sample(world, states, t, goal_xy, cfg: DatasetConfig, seed, grid=None, filt_cfg=FilterConfig(),
                run_id=0):
    """Observation + GT set at time ``t`` of a rollout; None when no GT survives."""
    cur = _state_at(states, t)
    poses = [_state_at(states, t - cfg.interval * k) for k in range(cfg.n_lidar - 1, -1, -1)]
    lcfg = LidarConfig(n_points=cfg.n_points)
    clouds = [sample_pointcloud(world, p, seed=seed * 7919 + int(round((t - cfg.interval * (cfg.n_lidar - 1 - k)) * 10)),
                                cfg=lcfg) for k, p in enumerate(poses)]
    lidar = np.stack([cloud_in_frame(c, p, cur) for c, p in zip(clouds, poses)])
    hist_states = [_state_at(states, t - cfg.interval * k) for k in range(cfg.n_history - 1, -1, -1)]
    history = history_matrix(hist_states, cur, cfg.n_history)
    paths = plan_ground_truth(world, cur, cfg, grid=grid)
    elev = crop_elevation(world, cur, filt_cfg.extent, filt_cfg.res)
    paths = [p for p in paths if filter_collisions([p.trajectory], elev, filt_cfg)[0]]
    paths = diversity_filter(paths, cfg.fde_min)
    if not paths:
        return None
    labels, keep = label_points(clouds[-1], world, cur)
    classes = crop_classes(world, cur, cfg.map_size, cfg.map_res).data.astype(np.int16)
    meta = {"world_seed": int(world.seed), "run": int(run_id), "t": float(t), "pose": cur.to_list(),
            "goal_xy": [float(goal_xy[0]), float(goal_xy[1])], "m": len(paths)}
    return TrainingSample(lidar, history, polar_goal(cur, goal_xy), np.stack([p.trajectory for p in paths]),
                          classes, labels.astype(np.int64), keep.astype(bool), meta)


def slice_runs(world, rollout, goal_xy, cfg: DatasetConfig = DatasetConfig(), seed=0, run_id=0):
    """Yield one TrainingSample per ``interval`` after ``warmup`` seconds of the rollout."""
    states = rollout.states if hasattr(rollout, "states") else rollout
    duration = states[-1].t - states[0].t
    grid = planning_grid(world)
    for t in slice_times(duration, cfg.interval, cfg.warmup):
        s = make_sample(world, states, states[0].t + t, goal_xy, cfg, seed, grid, run_id=run_id)
        if s is not None:
            yield s


def random_run_endpoints(world, rng, min_distance=25.0, tries=200):
    """Start/goal pair on reachable pavement at least ``min_distance`` apart."""
    pave = np.argwhere(world.classes == world.registry.id("pavement"))
    if len(pave) == 0:
        return None
    cs = world.cell_size
    strict = world.strict_mask()
    for _ in range(tries):
        a, b = pave[rng.integers(len(pave))], pave[rng.integers(len(pave))]
        sa = ((a[1] + 0.5) * cs, (a[0] + 0.5) * cs)
        sb = ((b[1] + 0.5) * cs, (b[0] + 0.5) * cs)
        if math.hypot(sa[0] - sb[0], sa[1] - sb[1]) < min_distance:
            continue
        if world.footprint_hits_strict(sa[0], sa[1], 0.8) or strict[a[0], a[1]]:
            continue
        return sa, sb
    return None


def generate_runs(world, n_runs, seed=0, cfg: DatasetConfig = DatasetConfig(), exec_cfg=ExecutiveConfig(),
                  progress=None):
    """Drive ``n_runs`` oracle rollouts (run 0 uses the world's own start/goal) and slice them."""
    rng = np.random.default_rng(seed)
    samples = []
    for run in range(n_runs):
        if run == 0:
            sa, sb = world.start, world.goal
        else:
            pair = random_run_endpoints(world, rng, cfg.min_run_length)
            if pair is None:
                break
            sa, sb = pair
        heading = math.atan2(sb[1] - sa[1], sb[0] - sa[0])
        start = RobotState(sa[0], sa[1], heading)
        roll = oracle_rollout(world, start, sb, exec_cfg, tolerance=1.0)
        if not roll.success:
            continue
        for s in slice_runs(world, roll, sb, cfg, seed=seed * 1000 + run, run_id=run):
            samples.append(s)
            if progress is not None:
                progress(s)
    return samples


def two_mode_samples(n=8, seed=0, n_points=256):
    """Toy set: the symmetric block world, stationary robot, both detours as GT."""
    world = two_mode_world()
    state = RobotState(world.start[0], world.start[1], world.start_heading)
    gt = two_mode_trajectories()
    out = []
    for k in range(n):
        clouds = [sample_pointcloud(world, state, seed=seed * 1000 + 3 * k + i, cfg=LidarConfig(n_points=n_points))
                  for i in range(3)]
        labels, keep = label_points(clouds[-1], world, state)
        out.append(TrainingSample(
            np.stack(clouds), history_matrix([state], state), polar_goal(state, world.goal), gt.copy(),
            crop_classes(world, state).data.astype(np.int16), labels.astype(np.int64), keep.astype(bool),
            {"world_seed": 0, "run": 0, "t": 0.0, "pose": state.to_list(), "goal_xy": list(world.goal), "m": 2}))
    return out


# ---------------------------------------------------------------- training views


def obstacle_lookup(world_or_registry):
    reg = getattr(world_or_registry, "registry", world_or_registry)
    out = np.zeros(max(c.id for c in reg.classes) + 1)
    for c in reg.classes:
        out[c.id] = 1.0 if (c.soft or c.strict) else 0.0
    return out


def attach_heatmaps(samples, segmenter):
    """Compute I_seg for every sample from its (already current-frame) clouds."""
    ident = RobotState()
    for s in samples:
        s.heatmap = build_heatmap(segmenter, list(s.lidar), [ident] * len(s.lidar), ident)
    return samples


def to_training_dicts(samples, registry, col_sigma=3.0):
    """Dicts in the layout expected by ``navae.train_navae``."""
    lookup = obstacle_lookup(registry)
    out = []
    for s in samples:
        if s.heatmap is None:
            raise ValueError("heatmaps must be attached before training")
        out.append({"lidar": s.lidar, "history": s.history, "goal": s.goal, "heatmap": s.heatmap,
                    "obstacle": smoothed_obstacle_map(s.classes, lookup, col_sigma), "gt": s.gt})
    return out


# ---------------------------------------------------------------- serialization


def _write_sample(path, sample: TrainingSample):
    arrays = sample.arrays()
    header = {"format": SAMPLE_FORMAT, "meta": sample.meta, "arrays": []}
    offset = 0
    blobs = []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        b = a.tobytes()
        header["arrays"].append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset,
                                 "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(len(head).to_bytes(8, "little"))
        fh.write(head)
        for b in blobs:
            fh.write(b)


def _read_sample(path) -> TrainingSample:
    with open(path, "rb") as fh:
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n).decode("utf-8"))
        payload = fh.read()
    if header.get("format") != SAMPLE_FORMAT:
        raise ValueError(f"{path}: unknown sample format")
    arrays = {}
    for d in header["arrays"]:
        raw = payload[d["offset"]:d["offset"] + d["nbytes"]]
        arrays[d["name"]] = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()
    return TrainingSample(arrays["lidar"], arrays["history"], arrays["goal"], arrays["gt"], arrays["classes"],
                          arrays["labels"], arrays["keep"], header["meta"], arrays.get("heatmap"))


def write_dataset(directory, samples, cfg: DatasetConfig = DatasetConfig(), extra=None):
    os.makedirs(directory, exist_ok=True)
    files = []
    for k, s in enumerate(samples):
        name = f"sample_{k:06d}.bin"
        _write_sample(os.path.join(directory, name), s)
        files.append(name)
    m_hist = {}
    for s in samples:
        m_hist[str(len(s.gt))] = m_hist.get(str(len(s.gt)), 0) + 1
    manifest = {"count": len(samples), "files": files, "config": asdict(cfg), "config_hash": cfg.hash(),
                "m_distribution": dict(sorted(m_hist.items(), key=lambda kv: int(kv[0]))), **(extra or {})}
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def read_dataset(directory):
    """Returns ``(samples, manifest)``; rejects a manifest/file-count mismatch."""
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    present = sorted(f for f in os.listdir(directory) if f.startswith("sample_") and f.endswith(".bin"))
    if manifest["count"] != len(manifest["files"]) or sorted(manifest["files"]) != present:
        raise ValueError("manifest does not match the sample files on disk")
    return [_read_sample(os.path.join(directory, f)) for f in manifest["files"]], manifest


__all__ = [
    "DatasetConfig", "GroundTruthPath", "TrainingSample", "plan_ground_truth", "diversity_filter", "frontier_cells",
    "slice_runs", "slice_times", "make_sample", "generate_runs", "two_mode_samples", "attach_heatmaps",
    "to_training_dicts", "obstacle_lookup", "write_dataset", "read_dataset", "random_run_endpoints",
]
