"""Semantic cost image, trajectory projection, scoring and selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sim.sensors import CameraModel, ClassProbMaps

DEFAULT_COSTS = (
    ("pavement", 0.0), ("tree", 3.0), ("grass", 2.0), ("wall", 3.0), ("stairs", 3.0),
    ("person", 3.0), ("hole", 3.0), ("sky", 4.0),
)


@dataclass(frozen=True)
class ClassCostTable:
    entries: tuple = DEFAULT_COSTS

    def __post_init__(self):
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        if any(c < 0 for _, c in self.entries):
            raise ValueError("class costs must be non-negative")

    @property
    def names(self):
        return tuple(n for n, _ in self.entries)

    @property
    def costs(self):
        return np.array([c for _, c in self.entries], dtype=float)

    def cost_of(self, name, default=None):
        for n, c in self.entries:
            if n == name:
                return c
        if default is None:
            raise KeyError(name)
        return default

    def with_cost(self, name, cost):
        """Copy with ``name`` set to ``cost`` (appended when absent)."""
        if name in self.names:
            return ClassCostTable(tuple((n, cost if n == name else c) for n, c in self.entries))
        return ClassCostTable(self.entries + ((name, cost),))

    def to_json(self):
        return [[n, c] for n, c in self.entries]


@dataclass(frozen=True)
class SelectorConfig:
    gamma: float = 0.8
    alpha1: float = 2.0
    alpha2: float = 0.2
    c_u: float = 2.0
    t_occ: float = 2.0
    theta_end_mode: str = "segment"  # "segment": final segment vs bearing to goal; "heading": robot x-axis instead

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.c_u < 0 or self.t_occ < 0:
            raise ValueError("C_u and T_occ must be non-negative")


@dataclass(frozen=True)
class SemanticCostMap:
    image: np.ndarray
    timestamp: float
    table: ClassCostTable


def build_costmap(maps: ClassProbMaps, table: ClassCostTable) -> SemanticCostMap:
    """Per-pixel cost of the most probable class (ties -> lowest class index)."""
    if len(maps.names) == 0:
        raise ValueError("at least one class map is required")
    missing = set(maps.names) - set(table.names)
    if missing:
        raise ValueError(f"no cost for classes {sorted(missing)}")
    costs = np.array([table.cost_of(n) for n in maps.names], dtype=float)
    winner = np.argmax(maps.maps, axis=0)  # argmax returns the first maximum
    return SemanticCostMap(costs[winner], maps.timestamp, table)


def project_points(points_robot, cam: CameraModel, ground_z=0.0):
    """Robot-frame (N, 2) ground points -> pixel coordinates (N, 2) and visibility."""
    pts = np.asarray(points_robot, dtype=float).reshape(-1, 2)
    p3 = np.concatenate([pts, np.full((len(pts), 1), ground_z)], axis=1)
    return cam.project_camera_points(cam.to_camera(p3))


def project_trajectory(traj, cam: CameraModel):
    """Pixel sequence and visibility flags for a trajectory's waypoints."""
    return project_points(getattr(traj, "waypoints", traj), cam)


def waypoint_costs(pixels, visible, cost_image, cfg: SelectorConfig):
    """Per-waypoint (cost, masked) before discounting.

    Visible waypoints take the image cost unless it exceeds T_occ (masked ->
    C_u); not-visible waypoints also take C_u.
    """
    n = len(visible)
    raw = np.full(n, np.nan)
    if visible.any():
        u = np.floor(pixels[visible, 0]).astype(np.int64)
        v = np.floor(pixels[visible, 1]).astype(np.int64)
        raw[visible] = cost_image[v, u]
    masked = ~visible | (raw > cfg.t_occ)
    cost = np.where(masked, cfg.c_u, raw)
    return cost, masked


def score_semantic(pixels, visible, costmap, cfg: SelectorConfig = SelectorConfig(), exponents=None):
    """Discounted semantic cost J and per-waypoint record.

    ``exponents`` defaults to 1..N; the executive passes the original
    exponents when re-scoring the remaining waypoints of a plan.
    """
    image = costmap.image if isinstance(costmap, SemanticCostMap) else np.asarray(costmap)
    cost, masked = waypoint_costs(np.asarray(pixels), np.asarray(visible, dtype=bool), image, cfg)
    j = np.arange(1, len(cost) + 1) if exponents is None else np.asarray(exponents)
    contrib = cfg.gamma ** j * cost
    total = 0.0
    for c in contrib:
        total += c
    record = [{"j": int(jj), "cost": float(c), "masked": bool(m), "contrib": float(q)}
              for jj, c, m, q in zip(j, cost, masked, contrib)]
    return total, record


def final_alignment_error(waypoints, goal_xy):
    """Angle between the last segment and the bearing from the last waypoint to the goal."""
    w = np.asarray(waypoints, dtype=float)
    end = w[-1]
    prev = w[-2] if len(w) > 1 else np.zeros(2)
    seg = end - prev
    to_goal = np.asarray(goal_xy, dtype=float) - end
    if np.hypot(*to_goal) == 0.0 or np.hypot(*seg) == 0.0:
        return 0.0
    a = math.atan2(seg[1], seg[0])
    b = math.atan2(to_goal[1], to_goal[0])
    d = (b - a + math.pi) % (2 * math.pi) - math.pi
    return abs(d) if d != -math.pi else math.pi


def goal_xy_from_polar(goal):
    rho, theta = goal
    return np.array([rho * math.cos(theta), rho * math.sin(theta)])


def score_goal(traj, goal, cfg: SelectorConfig = SelectorConfig(), theta_end=None):
    """alpha1 * log(1 + d_end) + alpha2 * |theta_end| / pi; ``goal`` is polar (rho, theta)."""
    w = np.asarray(getattr(traj, "waypoints", traj), dtype=float)
    gxy = goal_xy_from_polar(goal)
    d = float(np.hypot(*(w[-1] - gxy)))
    if theta_end is None:
        if cfg.theta_end_mode == "heading":
            # a unit segment along the robot's current heading, ending at the last waypoint
            theta_end = final_alignment_error(np.stack([w[-1] - [1.0, 0.0], w[-1]]), gxy)
        else:
            theta_end = final_alignment_error(w, gxy)
    return cfg.alpha1 * math.log1p(d) + cfg.alpha2 * abs(theta_end) / math.pi


@dataclass
class Selection:
    index: int  # position within the candidate list
    trajectory: object
    j_sem: float
    j_goal: float
    records: list = field(default_factory=list)
    all_costs: list = field(default_factory=list)

    @property
    def total(self):
        return self.j_sem + self.j_goal


def score_candidates(candidates, costmap, cam, goal, cfg: SelectorConfig = SelectorConfig()):
    out = []
    for traj in candidates:
        px, vis = project_trajectory(traj, cam)
        js, rec = score_semantic(px, vis, costmap, cfg)
        jg = score_goal(traj, goal, cfg)
        out.append((js, jg, rec))
    return out


def select_best(candidates, costmap, cam, goal, cfg: SelectorConfig = SelectorConfig()):
    """Argmin of J_sem + J_goal; ties go to the earliest candidate. None when empty."""
    if len(candidates) == 0:
        return None
    scored = score_candidates(candidates, costmap, cam, goal, cfg)
    totals = [js + jg for js, jg, _ in scored]
    best = int(np.argmin(totals))
    js, jg, rec = scored[best]
    return Selection(best, candidates[best], js, jg, rec, totals)


__all__ = [
    "ClassCostTable", "SelectorConfig", "SemanticCostMap", "DEFAULT_COSTS", "build_costmap",
    "project_points", "project_trajectory", "waypoint_costs", "score_semantic", "score_goal",
    "final_alignment_error", "goal_xy_from_polar", "select_best", "score_candidates", "Selection",
]
