"""Grid path planning over a soft-cost terrain grid (oracle and ground-truth paths)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from . import kernels
from .sim.world import WorldModel


@dataclass(frozen=True)
class PlannerConfig:
    soft_weight: float = 1.0  # edge cost = 1 + soft_weight * class cost
    inflation: float = 0.8  # metres kept clear of strict cells and the map edge
    cruise_speed: float = 1.2
    n_waypoints: int = 12
    dt: float = 1.0


def terrain_costs(world: WorldModel, class_costs=None, soft_weight=1.0):
    """Per-cell traversal cost (inf on strict cells).

    ``class_costs`` maps class name -> semantic cost; by default pavement 0
    and every soft class 2.
    """
    reg = world.registry
    per_class = np.empty(len(reg.names), dtype=float)
    for cid, name in enumerate(reg.names):
        info = reg[name]
        if info.strict:
            per_class[cid] = np.inf
        elif class_costs is not None and name in class_costs:
            per_class[cid] = 1.0 + soft_weight * class_costs[name]
        else:
            per_class[cid] = 1.0 + soft_weight * (2.0 if info.soft else 0.0)
    return per_class[world.classes]


def _disc(radius_cells):
    r = int(math.ceil(radius_cells))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx ** 2 + yy ** 2) <= radius_cells ** 2


def inflate(cost, radius_cells, keep_free=None):
    """Block cells within ``radius_cells`` of a blocked cell or of the grid edge."""
    blocked = ~np.isfinite(cost)
    padded = np.pad(blocked, 1, constant_values=True)
    grown = binary_dilation(padded, structure=_disc(radius_cells))[1:-1, 1:-1]
    out = np.where(grown, np.inf, cost)
    if keep_free is not None:
        out = np.where(keep_free & ~blocked, cost, out)
    return out


def planning_grid(world: WorldModel, cfg: PlannerConfig = PlannerConfig(), class_costs=None):
    cost = terrain_costs(world, class_costs, cfg.soft_weight)
    return inflate(cost, cfg.inflation / world.cell_size)


def _free_near(shape, cell, radius_cells):
    mask = np.zeros(shape, dtype=bool)
    r = int(math.ceil(radius_cells))
    i, j = cell
    d = _disc(radius_cells)
    i0, j0 = i - r, j - r
    for di in range(d.shape[0]):
        for dj in range(d.shape[1]):
            ii, jj = i0 + di, j0 + dj
            if d[di, dj] and 0 <= ii < shape[0] and 0 <= jj < shape[1]:
                mask[ii, jj] = True
    return mask


def unblock_start(grid, base_cost, cell, radius_cells):
    """Let the planner leave an inflated start region (strict cells stay blocked)."""
    if np.isfinite(grid[cell]):
        return grid
    near = _free_near(grid.shape, cell, radius_cells)
    return np.where(near & np.isfinite(base_cost), base_cost, grid)


def extract_path(parent, goal_flat, start_flat):
    """Follow the parent links back from the goal; returns (row, col) cells."""
    W = parent.shape[1]
    flat = parent.ravel()
    out = []
    cur = int(goal_flat)
    guard = flat.size + 1
    while cur != -1 and guard:
        out.append(divmod(cur, W))
        if cur == start_flat:
            break
        cur = int(flat[cur])
        guard -= 1
    if not out or out[-1] != divmod(int(start_flat), W):
        return []
    return out[::-1]


def cells_to_xy(cells, cell_size):
    c = np.asarray(cells, dtype=float).reshape(-1, 2)
    return np.stack([(c[:, 1] + 0.5) * cell_size, (c[:, 0] + 0.5) * cell_size], axis=-1)


def _segment_samples(a, b, step, centred):
    d = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(int(math.ceil(d / step)), 1)
    t = (np.arange(n) + 0.5) / n if centred else np.arange(n + 1) / n
    return a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), d


def segment_free(grid, a, b, cell_size, step=0.05):
    """True iff every sample along a->b (world metres) lies on a finite-cost cell."""
    x, y, _ = _segment_samples(a, b, step, False)
    ix = np.floor(x / cell_size).astype(np.int64)
    iy = np.floor(y / cell_size).astype(np.int64)
    H, W = grid.shape
    if ix.min() < 0 or iy.min() < 0 or ix.max() >= W or iy.max() >= H:
        return False
    return bool(np.isfinite(grid[iy, ix]).all())


def segment_cost(base_cost, a, b, cell_size, step=0.05):
    x, y, d = _segment_samples(a, b, step, True)
    H, W = base_cost.shape
    ix = np.minimum(np.maximum(np.floor(x / cell_size).astype(np.int64), 0), W - 1)
    iy = np.minimum(np.maximum(np.floor(y / cell_size).astype(np.int64), 0), H - 1)
    return float(base_cost[iy, ix].mean()) * d


def corners(points):
    """Drop interior points of straight runs (keeps the first and last point)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) <= 2:
        return pts
    d = np.diff(pts, axis=0)
    cross = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
    dot = (d[:-1] * d[1:]).sum(axis=1)
    keep = np.concatenate([[True], (np.abs(cross) > 1e-12) | (dot <= 0), [True]])
    return pts[keep]


def shortcut(points, grid, cell_size, base_cost=None, tol=1.02):
    """Greedy line-of-sight simplification that never raises terrain cost by more than ``tol``."""
    pts = np.asarray(points, dtype=float)
    if len(pts) <= 2:
        return pts
    along = None
    if base_cost is not None:
        seg = [segment_cost(base_cost, pts[k], pts[k + 1], cell_size) for k in range(len(pts) - 1)]
        along = np.concatenate([[0.0], np.cumsum(seg)])
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1:
            ok = segment_free(grid, pts[i], pts[j], cell_size)
            if ok and along is not None:
                ok = segment_cost(base_cost, pts[i], pts[j], cell_size) <= tol * (along[j] - along[i])
            if ok:
                break
            j -= 1
        out.append(pts[j])
        i = j
    return np.asarray(out)


def polyline_length(pts):
    pts = np.asarray(pts, dtype=float)
    return float(np.hypot(*np.diff(pts, axis=0).T).sum()) if len(pts) > 1 else 0.0


def resample(pts, spacing, n=None):
    """Points every ``spacing`` metres of arc length (the first is ``spacing`` in).

    With ``n`` given, exactly ``n`` points are returned, clamped at the end.
    """
    pts = np.asarray(pts, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if n is None:
        n = int(math.floor(total / spacing + 1e-9))
    s = np.minimum(spacing * np.arange(1, n + 1), total)
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.stack([x, y], axis=-1)


@dataclass
class PlanResult:
    path: np.ndarray  # (P, 2) world metres, start first
    cost: float
    length: float


def plan_path(world: WorldModel, start_xy, goal_xy, cfg: PlannerConfig = PlannerConfig(), class_costs=None,
              grid=None):
    """Cheapest start->goal path on the inflated soft-cost grid, smoothed. None if unreachable."""
    base = terrain_costs(world, class_costs, cfg.soft_weight)
    grid = planning_grid(world, cfg, class_costs) if grid is None else grid
    cs = world.cell_size
    s = (int(start_xy[1] // cs), int(start_xy[0] // cs))
    g = (int(goal_xy[1] // cs), int(goal_xy[0] // cs))
    rad = cfg.inflation / cs
    grid = unblock_start(grid, base, s, rad + 1)
    grid = unblock_start(grid, base, g, rad + 1)
    W = grid.shape[1]
    dist, parent = kernels.grid_dijkstra(grid, s, g[0] * W + g[1])
    if not np.isfinite(dist[g]):
        return None
    cells = extract_path(parent, g[0] * W + g[1], s[0] * W + s[1])
    pts = cells_to_xy(cells, cs)
    pts[0] = start_xy
    pts[-1] = goal_xy
    pts = shortcut(corners(pts), grid, cs, base)
    return PlanResult(pts, float(dist[g]), polyline_length(pts))


__all__ = [
    "PlannerConfig", "PlanResult", "terrain_costs", "inflate", "planning_grid", "plan_path",
    "extract_path", "shortcut", "corners", "cells_to_xy", "segment_cost", "resample", "polyline_length", "segment_free",
]
