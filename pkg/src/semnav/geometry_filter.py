"""Slope-based feasibility filter over a local elevation grid, and recovery headings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim.robot import wrap_angle
from .sim.sensors import LocalGrid


@dataclass(frozen=True)
class FilterConfig:
    theta_max: float = math.radians(30.0)
    d_foot: float = 0.8
    extent: float = 18.0
    res: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.theta_max < math.pi / 2):
            raise ValueError("theta_max must lie in (0, pi/2)")
        if self.d_foot <= 0:
            raise ValueError("d_foot must be positive")


@dataclass
class Verdict:
    feasible: bool
    reason: str  # "ok", "slope", "out_of_window"
    thetas: np.ndarray  # per-segment inclination (rad); NaN where not evaluated

    def to_json(self):
        return {"feasible": self.feasible, "reason": self.reason,
                "max_theta": float(np.nanmax(np.abs(self.thetas))) if np.isfinite(self.thetas).any() else None}


def _centres(grid: LocalGrid, axis):
    n = grid.data.shape[axis]
    lo = grid.x_min if axis == 0 else grid.y_min
    return lo + (np.arange(n) + 0.5) * grid.res


def in_window(grid: LocalGrid, x, y):
    i, j = grid.index_of(x, y)
    return grid.inside(i, j)


def footprint_max(grid: LocalGrid, x, y, d_foot):
    """Max elevation over cells whose centres lie in the d_foot square at (x, y).

    ``x``/``y`` are arrays of equal shape; the result matches them. Squares
    containing no cell centre fall back to the cell under the point.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    half = d_foot / 2.0
    n0, n1 = grid.data.shape
    xs, ys = _centres(grid, 0), _centres(grid, 1)
    span = int(math.ceil(d_foot / grid.res)) + 3
    off = np.arange(span) - 1
    i_lo = np.floor((x - half - grid.x_min) / grid.res - 0.5).astype(np.int64)
    j_lo = np.floor((y - half - grid.y_min) / grid.res - 0.5).astype(np.int64)
    ii = i_lo[..., None] + off  # (..., span)
    jj = j_lo[..., None] + off
    ok_i = (ii >= 0) & (ii < n0)
    ok_j = (jj >= 0) & (jj < n1)
    ci = np.clip(ii, 0, n0 - 1)
    cj = np.clip(jj, 0, n1 - 1)
    sel_i = ok_i & (np.abs(xs[ci] - x[..., None]) <= half)
    sel_j = ok_j & (np.abs(ys[cj] - y[..., None]) <= half)
    vals = grid.data[ci[..., :, None], cj[..., None, :]]
    sel = sel_i[..., :, None] & sel_j[..., None, :]
    out = np.where(sel, vals, -np.inf).max(axis=(-2, -1))
    empty = ~sel.any(axis=(-2, -1))
    if empty.any():
        pi, pj = grid.index_of(x[empty], y[empty])
        out[empty] = grid.data[np.clip(pi, 0, n0 - 1), np.clip(pj, 0, n1 - 1)]
    return out


def segment_inclinations(waypoints, grid: LocalGrid, d_foot):
    """Per-segment inclination including the segment from the robot's own footprint."""
    w = np.asarray(waypoints, dtype=float)
    pts = np.concatenate([np.zeros_like(w[..., :1, :]), w], axis=-2)
    z = footprint_max(grid, pts[..., 0], pts[..., 1], d_foot)
    dz = np.diff(z, axis=-1)
    dist = np.linalg.norm(np.diff(pts, axis=-2), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.arctan(dz / dist)
    theta = np.where(dist == 0.0, math.pi / 2, theta)
    return theta


def filter_collisions(trajectories, elev: LocalGrid, cfg: FilterConfig = FilterConfig()):
    """Split trajectories into the feasible subset and per-trajectory verdicts.

    A trajectory is discarded if any waypoint leaves the elevation window,
    or if any segment's inclination magnitude exceeds ``theta_max``.
    ``trajectories`` may hold ``Trajectory`` objects or (N_w, 2) arrays.
    """
    verdicts = []
    feasible = []
    if len(trajectories) == 0:
        return feasible, verdicts
    wps = np.stack([np.asarray(getattr(t, "waypoints", t), dtype=float) for t in trajectories])
    inside = in_window(elev, wps[..., 0], wps[..., 1]).all(axis=-1)
    theta = segment_inclinations(wps, elev, cfg.d_foot)
    slope_ok = (np.abs(theta) <= cfg.theta_max).all(axis=-1)
    for k, traj in enumerate(trajectories):
        if not inside[k]:
            v = Verdict(False, "out_of_window", np.full(theta.shape[-1], np.nan))
        elif not slope_ok[k]:
            v = Verdict(False, "slope", theta[k])
        else:
            v = Verdict(True, "ok", theta[k])
        verdicts.append(v)
        if v.feasible:
            feasible.append(traj)
        elif hasattr(traj, "collision_filtered"):
            traj.collision_filtered = True
    return feasible, verdicts


def recovery_offsets(step_deg=10.0):
    """0, +s, -s, +2s, -2s, ... up to and including 180 degrees (once)."""
    out = [0.0]
    n = int(round(180.0 / step_deg))
    for k in range(1, n):
        out += [k * step_deg, -k * step_deg]
    out.append(180.0)
    return [math.radians(d) for d in out]


def probe_trajectory(heading, length=4.0, spacing=1.0):
    s = np.arange(1, int(round(length / spacing)) + 1) * spacing
    return np.stack([s * math.cos(heading), s * math.sin(heading)], axis=-1)


def recovery_direction(state, goal_bearing, elev: LocalGrid, cfg: FilterConfig = FilterConfig(),
                       step_deg=10.0, probe_length=4.0, probe_spacing=1.0):
    """Nearest collision-free heading to the goal bearing, or None.

    ``goal_bearing`` is relative to the robot heading; ``elev`` should cover
    all directions (a robot-centred crop). Returns a world-frame heading.
    """
    for off in recovery_offsets(step_deg):
        rel = wrap_angle(goal_bearing + off)
        probe = probe_trajectory(rel, probe_length, probe_spacing)
        ok, _ = filter_collisions([probe], elev, cfg)
        if ok:
            base = state.heading if state is not None else 0.0
            return wrap_angle(base + rel)
    return None


__all__ = [
    "FilterConfig", "Verdict", "filter_collisions", "footprint_max", "segment_inclinations",
    "recovery_direction", "recovery_offsets", "probe_trajectory", "in_window",
]
