"""Hand-built worlds for tests, ablations and acceptance runs."""

from __future__ import annotations

import numpy as np

from .world import ClassRegistry, world_from_layers

CELL = 0.2


def _grid(width_m, height_m, fill, registry):
    H, W = int(round(height_m / CELL)), int(round(width_m / CELL))
    return np.full((H, W), registry.id(fill), dtype=np.uint8)


def _rect(grid, registry, name, x0, y0, x1, y1):
    i0, i1 = int(round(y0 / CELL)), int(round(y1 / CELL))
    j0, j1 = int(round(x0 / CELL)), int(round(x1 / CELL))
    grid[max(i0, 0):max(i1, 0), max(j0, 0):max(j1, 0)] = registry.id(name)


def flat_world(width_m=60.0, height_m=40.0, start=(5.0, 20.0), goal=(35.0, 20.0), fill="pavement"):
    reg = ClassRegistry()
    g = _grid(width_m, height_m, fill, reg)
    heading = float(np.arctan2(goal[1] - start[1], goal[0] - start[0]))
    return world_from_layers(g, reg, CELL, start=start, goal=goal, start_heading=heading)


def wall_ahead_world(distance=2.0, start=(10.0, 20.0), height_m=40.0, width_m=40.0):
    """A tall wall face ``distance`` metres in front of a robot facing +x."""
    reg = ClassRegistry()
    g = _grid(width_m, height_m, "pavement", reg)
    x0 = start[0] + distance
    _rect(g, reg, "wall", x0, start[1] - 6.0, x0 + 0.4, start[1] + 6.0)
    return world_from_layers(g, reg, CELL, start=start, goal=(start[0] - 5.0, start[1]))


def two_mode_world():
    """Symmetric block straight ahead of the start: detour left or right."""
    reg = ClassRegistry()
    g = _grid(30.0, 20.0, "pavement", reg)
    _rect(g, reg, "wall", 10.0, 9.2, 12.0, 10.8)
    return world_from_layers(g, reg, CELL, start=(4.0, 10.0), goal=(26.0, 10.0), start_heading=0.0)


def two_mode_trajectories(speed=1.2, dt=1.0):
    """Mirror-image detours (robot frame) around the block of ``two_mode_world``."""
    headings = np.array([0.1, 0.3, 0.45, 0.45, 0.3, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    out = []
    for sign in (1.0, -1.0):
        vel = speed * np.stack([np.cos(headings), sign * np.sin(headings)], axis=-1)
        out.append(np.cumsum(vel * dt, axis=0))
    return np.stack(out)


def obstacle_course(seed_variant=0):
    """Grass patches, trees and walls around a pavement spine (validation world)."""
    reg = ClassRegistry()
    g = _grid(50.0, 30.0, "grass", reg)
    canopy = np.zeros_like(g)
    _rect(g, reg, "pavement", 0.0, 12.0, 50.0, 18.0)
    _rect(g, reg, "pavement", 20.0, 0.0, 24.0, 30.0)
    _rect(g, reg, "pavement", 38.0, 0.0, 41.0, 30.0)
    rng = np.random.default_rng(1000 + seed_variant)
    for _ in range(18):
        cx, cy = rng.uniform(2, 48), rng.choice([rng.uniform(2, 10), rng.uniform(20, 28)])
        if abs(cx - 22) < 3 or abs(cx - 39.5) < 3:
            continue
        H, W = g.shape
        ys, xs = np.ogrid[:H, :W]
        d2 = ((xs + 0.5) * CELL - cx) ** 2 + ((ys + 0.5) * CELL - cy) ** 2
        g[d2 <= 0.35**2] = reg.id("tree")
        canopy[d2 <= 1.8**2] = 1
    _rect(g, reg, "wall", 8.0, 18.5, 14.0, 18.9)
    _rect(g, reg, "wall", 28.0, 11.1, 33.0, 11.5)
    _rect(g, reg, "hole", 44.0, 5.0, 46.0, 7.0)
    return world_from_layers(g, reg, CELL, canopy=canopy, start=(3.0, 15.0), goal=(47.0, 15.0))


def grass_shortcut_world():
    """Pavement L around a grass field; the straight line to the goal crosses grass."""
    reg = ClassRegistry()
    g = _grid(40.0, 40.0, "grass", reg)
    _rect(g, reg, "pavement", 0.0, 2.0, 40.0, 7.0)     # south road
    _rect(g, reg, "pavement", 33.0, 0.0, 38.0, 40.0)   # east road
    _rect(g, reg, "wall", 0.0, 0.0, 40.0, 0.4)
    heading = 0.0
    return world_from_layers(g, reg, CELL, start=(4.0, 4.5), goal=(35.5, 30.0), start_heading=heading)


def local_minimum_world(variant=0):
    """U-shaped wall trap opening towards the start; goal behind the U."""
    reg = ClassRegistry()
    g = _grid(64.0, 40.0, "pavement", reg)
    depth = [6.0, 8.0, 5.0, 7.0, 9.0][variant % 5]
    half_w = [4.0, 5.0, 3.5, 6.0, 4.5][variant % 5]
    offset = [0.0, 1.0, -1.0, 0.5, -0.5][variant % 5]
    cx, cy = 26.0, 20.0 + offset
    _rect(g, reg, "wall", cx, cy - half_w, cx + 0.6, cy + half_w)              # back of the U
    _rect(g, reg, "wall", cx - depth, cy + half_w - 0.6, cx + 0.6, cy + half_w)  # upper arm
    _rect(g, reg, "wall", cx - depth, cy - half_w, cx + 0.6, cy - half_w + 0.6)  # lower arm
    if variant % 2:
        _rect(g, reg, "grass", cx + 3.0, cy - 10.0, cx + 8.0, cy + 10.0)
    return world_from_layers(g, reg, CELL, start=(8.0, 20.0), goal=(42.0, 20.0), start_heading=0.0)


def walled_in_world():
    reg = ClassRegistry()
    g = _grid(20.0, 20.0, "pavement", reg)
    H, W = g.shape
    ys, xs = np.ogrid[:H, :W]
    r = np.hypot((xs + 0.5) * CELL - 10.0, (ys + 0.5) * CELL - 10.0)
    g[(r >= 1.6) & (r <= 2.2)] = reg.id("wall")
    return world_from_layers(g, reg, CELL, start=(10.0, 10.0), goal=(18.0, 10.0))
