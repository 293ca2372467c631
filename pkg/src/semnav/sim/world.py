"""Semantic/elevation grid worlds.

World coordinates are metres with the origin at the lower-left corner of
the map; cell ``(ix, iy)`` covers ``[ix*c, (ix+1)*c) x [iy*c, (iy+1)*c)``
and grids are indexed ``[iy, ix]``.
"""

from __future__ import annotations

import base64
import json
import os
import zlib
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

STEP_HEIGHT = 0.3
GRASS_MAX_HEIGHT = 0.1


@dataclass(frozen=True)
class ClassInfo:
    name: str
    id: int
    height: float
    strict: bool
    soft: bool
    intensity: float


DEFAULT_CLASSES = (
    ClassInfo("pavement", 0, 0.0, False, False, 0.30),
    ClassInfo("grass", 1, 0.05, False, True, 0.60),
    ClassInfo("sand", 2, 0.0, False, True, 0.80),
    ClassInfo("tree", 3, 3.0, True, False, 0.20),
    ClassInfo("wall", 4, 1.5, True, False, 0.50),
    ClassInfo("hole", 5, -1.0, True, False, 0.10),
    ClassInfo("stairs", 6, 0.4, True, False, 0.40),
    ClassInfo("person", 7, 1.7, True, False, 0.45),
)
SKY = "sky"


class ClassRegistry:
    """Name/id lookup over the world's terrain classes. ``sky`` is a
    render-only class with no grid id."""

    def __init__(self, classes=DEFAULT_CLASSES):
        self.classes = tuple(classes)
        self._by_name = {c.name: c for c in self.classes}
        self._by_id = {c.id: c for c in self.classes}
        if len(self._by_name) != len(self.classes) or len(self._by_id) != len(self.classes):
            raise ValueError("class names and ids must be unique")

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name):
        return self._by_name[name]

    def by_id(self, cid):
        return self._by_id[int(cid)]

    def id(self, name):
        return self._by_name[name].id

    @property
    def names(self):
        return [c.name for c in self.classes]

    def lookup(self, attr):
        """Per-id array of a class attribute, indexable by a class grid."""
        size = max(self._by_id) + 1
        out = np.zeros(size, dtype=float)
        for c in self.classes:
            out[c.id] = float(getattr(c, attr))
        return out

    def to_json(self):
        return [asdict(c) for c in self.classes]

    @classmethod
    def from_json(cls, items):
        return cls(ClassInfo(**item) for item in items)

    def __eq__(self, other):
        return isinstance(other, ClassRegistry) and self.classes == other.classes


@dataclass(frozen=True, eq=False)
class WorldModel:
    cell_size: float
    classes: np.ndarray
    elevation: np.ndarray
    canopy: np.ndarray
    registry: ClassRegistry = field(default_factory=ClassRegistry)
    seed: int = 0
    start: tuple = (1.0, 1.0)
    goal: tuple = (1.0, 1.0)
    start_heading: float = 0.0
    canopy_base: float = 2.0
    canopy_top: float = 3.5

    def __post_init__(self):
        if self.classes.shape != self.elevation.shape or self.canopy.shape != self.classes.shape:
            raise ValueError("class, elevation and canopy grids must share extents")
        for arr in (self.classes, self.elevation, self.canopy):
            arr.setflags(write=False)

    @property
    def shape(self):
        return self.classes.shape

    @property
    def width_m(self):
        return self.classes.shape[1] * self.cell_size

    @property
    def height_m(self):
        return self.classes.shape[0] * self.cell_size

    def cell_of(self, x, y):
        """Cell indices (ix, iy) of world points; may fall outside the grid."""
        ix = np.floor(np.asarray(x, dtype=float) / self.cell_size).astype(np.int64)
        iy = np.floor(np.asarray(y, dtype=float) / self.cell_size).astype(np.int64)
        return ix, iy

    def inside(self, ix, iy):
        H, W = self.shape
        return (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)

    def class_at(self, x, y, outside=-1):
        ix, iy = self.cell_of(x, y)
        ok = self.inside(ix, iy)
        out = np.full(np.shape(ix), outside, dtype=np.int64)
        out[ok] = self.classes[iy[ok], ix[ok]]
        return out

    def elevation_at(self, x, y, outside=np.nan):
        ix, iy = self.cell_of(x, y)
        ok = self.inside(ix, iy)
        out = np.full(np.shape(ix), outside, dtype=float)
        out[ok] = self.elevation[iy[ok], ix[ok]]
        return out

    def strict_mask(self):
        return self.registry.lookup("strict")[self.classes].astype(bool)

    def footprint_hits_strict(self, x, y, radius):
        """True if any strict cell centre lies within ``radius`` of (x, y)."""
        c = self.cell_size
        r = int(np.ceil(radius / c)) + 1
        ix0, iy0 = int(np.floor(x / c)), int(np.floor(y / c))
        H, W = self.shape
        strict = self.registry.lookup("strict")
        for iy in range(iy0 - r, iy0 + r + 1):
            for ix in range(ix0 - r, ix0 + r + 1):
                cx, cy = (ix + 0.5) * c, (iy + 0.5) * c
                if (cx - x) ** 2 + (cy - y) ** 2 > radius * radius:
                    continue
                if not (0 <= ix < W and 0 <= iy < H):
                    return True
                if strict[self.classes[iy, ix]]:
                    return True
        return False


@dataclass
class WorldSpec:
    """Procedural generation parameters."""

    width_m: float = 60.0
    height_m: float = 60.0
    cell_size: float = 0.2
    pavement_fraction: float = 0.35
    obstacle_density: float = 0.05
    sand_fraction: float = 0.0
    corridor_width_m: float = 3.0
    start: tuple = (5.0, 5.0)
    goal: tuple = (55.0, 55.0)
    anchor_clearance_m: float = 2.5
    obstacle_mix: dict = field(default_factory=lambda: {"tree": 0.5, "wall": 0.3, "hole": 0.2})

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("start", "goal"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def _disc(mask_shape, cx, cy, r, cell):
    H, W = mask_shape
    ys, xs = np.ogrid[:H, :W]
    return ((xs + 0.5) * cell - cx) ** 2 + ((ys + 0.5) * cell - cy) ** 2 <= r * r


def _carve_corridor(grid_mask, a, b, width, cell, horizontal_first):
    """Mark an L-shaped corridor of ``width`` between points a and b."""
    (ax, ay), (bx, by) = a, b
    corner = (bx, ay) if horizontal_first else (ax, by)
    half = width / 2.0
    for (x0, y0), (x1, y1) in ((a, corner), (corner, b)):
        xlo, xhi = min(x0, x1) - half, max(x0, x1) + half
        ylo, yhi = min(y0, y1) - half, max(y0, y1) + half
        i0, i1 = max(int(np.floor(ylo / cell)), 0), int(np.ceil(yhi / cell))
        j0, j1 = max(int(np.floor(xlo / cell)), 0), int(np.ceil(xhi / cell))
        grid_mask[i0:i1, j0:j1] = True


def connected(passable, start_cell, goal_cell):
    """4-connected breadth-first reachability over a boolean grid."""
    H, W = passable.shape
    (sx, sy), (gx, gy) = start_cell, goal_cell
    if not (passable[sy, sx] and passable[gy, gx]):
        return False
    seen = np.zeros_like(passable, dtype=bool)
    seen[sy, sx] = True
    queue = deque([(sy, sx)])
    while queue:
        y, x = queue.popleft()
        if (y, x) == (gy, gx):
            return True
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < H and 0 <= nx < W and passable[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                queue.append((ny, nx))
    return False


def generate_world(spec: WorldSpec, seed: int, registry: ClassRegistry | None = None) -> WorldModel:
    """Procedurally build a world with a guaranteed pavement route start -> goal."""
    if spec.pavement_fraction <= 0:
        raise ValueError("pavement_fraction must be positive: the start-goal route is pavement")
    registry = registry or ClassRegistry()
    rng = np.random.default_rng(seed)
    cell = spec.cell_size
    H = int(round(spec.height_m / cell))
    W = int(round(spec.width_m / cell))
    pave, grass = registry.id("pavement"), registry.id("grass")
    classes = np.full((H, W), pave if spec.pavement_fraction >= 1.0 else grass, dtype=np.uint8)
    canopy = np.zeros((H, W), dtype=np.uint8)

    protected = np.zeros((H, W), dtype=bool)
    _carve_corridor(protected, spec.start, spec.goal, spec.corridor_width_m, cell, bool(rng.integers(2)))
    protected |= _disc((H, W), *spec.start, spec.anchor_clearance_m, cell)
    protected |= _disc((H, W), *spec.goal, spec.anchor_clearance_m, cell)

    if spec.pavement_fraction < 1.0:
        network = protected.copy()
        attempts = 0
        while network.mean() < spec.pavement_fraction and attempts < 200:
            attempts += 1
            ys, xs = np.nonzero(network)
            k = rng.integers(len(xs))
            a = ((xs[k] + 0.5) * cell, (ys[k] + 0.5) * cell)
            b = (rng.uniform(0, spec.width_m), rng.uniform(0, spec.height_m))
            width = rng.uniform(0.6, 1.0) * spec.corridor_width_m
            _carve_corridor(network, a, b, width, cell, bool(rng.integers(2)))
        classes[network] = pave

    if spec.sand_fraction > 0:
        target = spec.sand_fraction * H * W
        sand = registry.id("sand")
        placed = 0
        while placed < target:
            cx, cy = rng.uniform(0, spec.width_m), rng.uniform(0, spec.height_m)
            blob = _disc((H, W), cx, cy, rng.uniform(1.0, 4.0), cell) & (classes == grass) & ~protected
            classes[blob] = sand
            placed += max(int(blob.sum()), 1)

    if spec.obstacle_density > 0:
        names = sorted(spec.obstacle_mix)
        weights = np.array([spec.obstacle_mix[n] for n in names], dtype=float)
        weights /= weights.sum()
        free_area = (~protected).sum()
        occupied = 0
        guard = 0
        while occupied < spec.obstacle_density * free_area and guard < 10000:
            guard += 1
            kind = names[rng.choice(len(names), p=weights)]
            cx, cy = rng.uniform(0, spec.width_m), rng.uniform(0, spec.height_m)
            if kind == "tree":
                shape = _disc((H, W), cx, cy, 0.35, cell)
                crown = _disc((H, W), cx, cy, rng.uniform(1.2, 2.2), cell)
            elif kind == "wall":
                length, thick = rng.uniform(2.0, 8.0), 0.4
                if rng.integers(2):
                    length, thick = thick, length
                ys, xs = np.ogrid[:H, :W]
                shape = (np.abs((xs + 0.5) * cell - cx) <= length / 2) & (np.abs((ys + 0.5) * cell - cy) <= thick / 2)
                crown = None
            else:
                shape = _disc((H, W), cx, cy, rng.uniform(0.5, 1.2), cell)
                crown = None
            if (shape & protected).any() or not shape.any():
                continue
            classes[shape] = registry.id(kind)
            if crown is not None:
                canopy[crown] = 1
            occupied += int(shape.sum())

    elevation = registry.lookup("height")[classes].astype(np.float64)
    passable = classes == pave
    start_cell = tuple(int(v) for v in np.floor(np.asarray(spec.start) / cell))
    goal_cell = tuple(int(v) for v in np.floor(np.asarray(spec.goal) / cell))
    if not connected(passable, start_cell, goal_cell):
        raise RuntimeError("generated world lacks a pavement route between anchors")
    heading = float(np.arctan2(spec.goal[1] - spec.start[1], spec.goal[0] - spec.start[0]))
    return WorldModel(
        cell_size=cell, classes=classes, elevation=elevation, canopy=canopy, registry=registry,
        seed=int(seed), start=tuple(spec.start), goal=tuple(spec.goal), start_heading=heading,
    )


def world_from_layers(classes, registry=None, cell_size=0.2, canopy=None, start=(1.0, 1.0),
                      goal=(1.0, 1.0), start_heading=0.0, seed=0, elevation=None):
    """Assemble a world from a class grid (elevation from class heights)."""
    registry = registry or ClassRegistry()
    classes = np.asarray(classes, dtype=np.uint8)
    if elevation is None:
        elevation = registry.lookup("height")[classes].astype(np.float64)
    canopy = np.zeros_like(classes) if canopy is None else np.asarray(canopy, dtype=np.uint8)
    return WorldModel(
        cell_size=float(cell_size), classes=classes.copy(), elevation=np.array(elevation, dtype=np.float64),
        canopy=canopy.copy(), registry=registry, seed=int(seed), start=tuple(start), goal=tuple(goal),
        start_heading=float(start_heading),
    )


# ---------------------------------------------------------------- file IO

WORLD_FORMAT = "semnav-world/1"


def _encode(arr):
    return {
        "dtype": arr.dtype.str,
        "shape": list(arr.shape),
        "data": base64.b64encode(zlib.compress(np.ascontiguousarray(arr).tobytes())).decode("ascii"),
    }


def _decode(obj):
    raw = zlib.decompress(base64.b64decode(obj["data"]))
    return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()


def world_to_json(world: WorldModel) -> dict:
    return {
        "format": WORLD_FORMAT,
        "cell_size": world.cell_size,
        "extents": list(world.shape),
        "seed": world.seed,
        "start": list(world.start),
        "goal": list(world.goal),
        "start_heading": world.start_heading,
        "canopy_base": world.canopy_base,
        "canopy_top": world.canopy_top,
        "registry": world.registry.to_json(),
        "classes": _encode(world.classes),
        "elevation": _encode(world.elevation),
        "canopy": _encode(world.canopy),
    }


def world_from_json(obj: dict) -> WorldModel:
    if obj.get("format") != WORLD_FORMAT:
        raise ValueError(f"unsupported world format {obj.get('format')!r}")
    return WorldModel(
        cell_size=float(obj["cell_size"]),
        classes=_decode(obj["classes"]),
        elevation=_decode(obj["elevation"]),
        canopy=_decode(obj["canopy"]),
        registry=ClassRegistry.from_json(obj["registry"]),
        seed=int(obj["seed"]),
        start=tuple(obj["start"]),
        goal=tuple(obj["goal"]),
        start_heading=float(obj["start_heading"]),
        canopy_base=float(obj["canopy_base"]),
        canopy_top=float(obj["canopy_top"]),
    )


def save_world(world, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(world_to_json(world), fh, sort_keys=True)


def load_world(path):
    with open(path) as fh:
        return world_from_json(json.load(fh))
