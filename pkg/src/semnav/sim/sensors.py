"""Synthetic LiDAR, FPV semantic renderer and local elevation crops."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .. import kernels
from .robot import ROBOT_HEIGHT
from .world import SKY, WorldModel

SENSOR_HEIGHT = 0.8
CAMERA_HEIGHT = 0.8


# ---------------------------------------------------------------- camera


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera. ``rotation``/``translation`` map robot-frame points to
    the camera frame (x right, y down, z forward): p_c = R p_r + t."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        R = np.asarray(self.rotation, dtype=float)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or not np.isclose(np.linalg.det(R), 1.0):
            raise ValueError("extrinsic rotation must be orthonormal with det +1")

    @classmethod
    def forward_facing(cls, width=320, height=240, hfov_deg=90.0, mount_height=CAMERA_HEIGHT, pitch_deg=10.0,
                       forward_offset=0.0):
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        phi = math.radians(pitch_deg)
        right = np.array([0.0, -1.0, 0.0])
        forward = np.array([math.cos(phi), 0.0, -math.sin(phi)])
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        centre = np.array([forward_offset, 0.0, mount_height])
        return cls(width, height, fx, fx, width / 2.0, height / 2.0, R, -R @ centre)

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def centre_robot(self):
        return -self.rotation.T @ self.translation

    def to_camera(self, pts_robot):
        return np.asarray(pts_robot, dtype=float) @ self.rotation.T + self.translation

    def project_camera_points(self, pts_cam):
        """Pixel coordinates and validity (positive depth and in-bounds)."""
        pts_cam = np.atleast_2d(np.asarray(pts_cam, dtype=float))
        z = pts_cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pts_cam[:, 0] / z + self.cx
            v = self.fy * pts_cam[:, 1] / z + self.cy
        visible = (z > 0) & (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)
        return np.stack([u, v], axis=-1), visible

    def pixel_rays_robot(self):
        """Unit ray directions (H*W, 3) in the robot frame through pixel centres."""
        us = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        vs = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        uu, vv = np.meshgrid(us, vs)
        d = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d @ self.rotation


def _robot_to_world_dirs(dirs_robot, heading):
    c, s = math.cos(heading), math.sin(heading)
    out = np.empty_like(dirs_robot)
    out[:, 0] = c * dirs_robot[:, 0] - s * dirs_robot[:, 1]
    out[:, 1] = s * dirs_robot[:, 0] + c * dirs_robot[:, 1]
    out[:, 2] = dirs_robot[:, 2]
    return out


def _base_elevation(world, state):
    z = float(world.elevation_at(state.x, state.y, outside=0.0))
    return max(z, 0.0)


def cast(world: WorldModel, origin, dirs_world, max_range):
    return kernels.raycast_heightfield(
        origin, dirs_world, world.elevation, world.canopy, world.canopy_base, world.canopy_top,
        world.cell_size, max_range,
    )


# ---------------------------------------------------------------- semantics


@dataclass(frozen=True)
class ClassProbMaps:
    maps: np.ndarray  # (m, H, W) in [0, 1]
    names: tuple
    timestamp: float = 0.0

    def __post_init__(self):
        if self.maps.ndim != 3 or self.maps.shape[0] != len(self.names):
            raise ValueError("one probability image per class name required")


@dataclass(frozen=True)
class NoiseConfig:
    blur_sigma_px: float = 2.0
    additive_std: float = 0.05
    relabel: tuple = ()  # ((from_class, to_class), ...) applied before rendering

    @classmethod
    def none(cls):
        return cls(blur_sigma_px=0.0, additive_std=0.0)


def _name_seed(seed, name):
    return (int(seed) * 1000003 + zlib.crc32(name.encode("utf-8"))) % (2**63)


def render_labels(world: WorldModel, state, cam: CameraModel, max_range=60.0, relabel=()):
    """Per-pixel class name index image: registry id, or -1 for sky."""
    base = _base_elevation(world, state)
    c_r = cam.centre_robot
    ox, oy = state.to_world_frame(c_r[0], c_r[1])
    origin = (ox, oy, base + c_r[2])
    dirs = _robot_to_world_dirs(cam.pixel_rays_robot(), state.heading)
    _, ix, iy, kind = cast(world, origin, dirs, max_range)
    labels = np.full(dirs.shape[0], -1, dtype=np.int64)
    surf = kind == kernels.SURFACE
    labels[surf] = world.classes[iy[surf], ix[surf]]
    labels[kind == kernels.CANOPY] = world.registry.id("tree")
    for src, dst in relabel:
        labels[labels == world.registry.id(src)] = world.registry.id(dst)
    return labels.reshape(cam.height, cam.width)


def render_semantics(world: WorldModel, state, cam: CameraModel, queries, noise: NoiseConfig = NoiseConfig(),
                     seed=0, timestamp=None, max_range=60.0):
    """Synthetic open-vocabulary segmentation.

    Each query yields a probability image: one-hot on the true (first-hit)
    class, optionally blurred and perturbed with clipped additive noise.
    Names missing from the world's registry yield all-zero images.
    """
    labels = render_labels(world, state, cam, max_range=max_range, relabel=noise.relabel)
    maps = np.zeros((len(queries), cam.height, cam.width))
    for k, name in enumerate(queries):
        if name == SKY:
            m = (labels == -1).astype(float)
        elif name in world.registry:
            m = (labels == world.registry.id(name)).astype(float)
        else:
            continue
        if noise.blur_sigma_px > 0:
            m = gaussian_filter(m, noise.blur_sigma_px, mode="reflect", truncate=3.0)
        if noise.additive_std > 0:
            rng = np.random.default_rng(_name_seed(seed, name))
            m = np.clip(m + rng.normal(0.0, noise.additive_std, size=m.shape), 0.0, 1.0)
        maps[k] = m
    return ClassProbMaps(maps, tuple(queries), state.t if timestamp is None else timestamp)


# ---------------------------------------------------------------- lidar


@dataclass(frozen=True)
class LidarConfig:
    n_points: int = 256
    sensor_height: float = SENSOR_HEIGHT
    channels: int = 16
    elevation_min_deg: float = -30.0
    elevation_max_deg: float = 15.0
    max_range: float = 30.0
    oversample: int = 3
    voxel_size: float = 0.1
    intensity_noise: float = 0.02


def voxelize(points, voxel):
    """Replace the points in each occupied voxel by their centroid (sorted by voxel key)."""
    if len(points) == 0:
        return points
    keys = np.floor(points[:, :3] / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((counts.size, points.shape[1]))
    np.add.at(sums, inverse, points)
    return sums / counts[:, None]


def sample_pointcloud(world: WorldModel, state, n_points=None, seed=0, cfg: LidarConfig = LidarConfig()):
    """Ray-cast a 360 degree scan; returns (n_points, 4) of (x, y, z, intensity).

    Coordinates are in the sensor frame: x forward, y left, z up from the
    sensor, so flat ground sits at z = -sensor_height.
    """
    n_points = n_points or cfg.n_points
    rng = np.random.default_rng(seed)
    n_rays = cfg.oversample * n_points
    n_az = max(n_rays // cfg.channels, 1)
    ch = np.repeat(np.arange(cfg.channels), n_az)
    az_bin = np.tile(np.arange(n_az), cfg.channels)
    az = (az_bin + rng.uniform(size=ch.size)) / n_az * 2 * math.pi
    lo, hi = math.radians(cfg.elevation_min_deg), math.radians(cfg.elevation_max_deg)
    el = lo + (ch + rng.uniform(size=ch.size)) / cfg.channels * (hi - lo)
    dirs_r = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)
    base = _base_elevation(world, state)
    origin = (state.x, state.y, base + cfg.sensor_height)
    t, ix, iy, kind = cast(world, origin, _robot_to_world_dirs(dirs_r, state.heading), cfg.max_range)
    hit = kind != kernels.MISS
    pts = dirs_r[hit] * t[hit, None]
    cls = np.where(kind[hit] == kernels.CANOPY, world.registry.id("tree"), world.classes[iy[hit], ix[hit]])
    intensity = world.registry.lookup("intensity")[cls] + rng.normal(0.0, cfg.intensity_noise, size=cls.size)
    cloud = np.concatenate([pts, intensity[:, None]], axis=1)
    cloud = voxelize(cloud, cfg.voxel_size)
    if len(cloud) == 0:
        return np.zeros((n_points, 4))
    if len(cloud) >= n_points:
        idx = np.sort(rng.choice(len(cloud), size=n_points, replace=False))
    else:
        idx = np.concatenate([np.arange(len(cloud)), rng.choice(len(cloud), size=n_points - len(cloud))])
    return cloud[idx]


def cloud_to_world(cloud, state, world, sensor_height=SENSOR_HEIGHT):
    """Sensor-frame points -> world (x, y) and height above the robot's ground."""
    wx, wy = state.to_world_frame(cloud[:, 0], cloud[:, 1])
    z_ground = cloud[:, 2] + sensor_height
    return wx, wy, z_ground


# ---------------------------------------------------------------- elevation crop


@dataclass(frozen=True)
class LocalGrid:
    """Robot-frame raster: ``data[i, j]`` covers x = x_min + (i + .5) res,
    y = y_min + (j + .5) res."""

    data: np.ndarray
    res: float
    x_min: float
    y_min: float

    def index_of(self, x, y):
        i = np.floor((np.asarray(x) - self.x_min) / self.res).astype(np.int64)
        j = np.floor((np.asarray(y) - self.y_min) / self.res).astype(np.int64)
        return i, j

    def inside(self, i, j):
        n0, n1 = self.data.shape
        return (i >= 0) & (i < n0) & (j >= 0) & (j < n1)

    def centres(self):
        n0, n1 = self.data.shape
        xs = self.x_min + (np.arange(n0) + 0.5) * self.res
        ys = self.y_min + (np.arange(n1) + 0.5) * self.res
        return np.meshgrid(xs, ys, indexing="ij")


UNKNOWN_ELEVATION = 10.0


def crop_elevation(world: WorldModel, state, extent=18.0, res=0.1, back=1.0, unknown=UNKNOWN_ELEVATION):
    """Forward-facing ``extent`` x ``extent`` elevation window in the robot frame."""
    n = int(round(extent / res))
    x_min, y_min = -back, -extent / 2.0
    grid = LocalGrid(np.zeros((n, n)), res, x_min, y_min)
    xs, ys = grid.centres()
    wx, wy = state.to_world_frame(xs, ys)
    data = world.elevation_at(wx, wy, outside=unknown)
    return LocalGrid(data, res, x_min, y_min)


def crop_classes(world: WorldModel, state, size=90, res=0.2, outside=-1):
    """Robot-centred class raster (used for the collision-loss semantic slice)."""
    half = size * res / 2.0
    grid = LocalGrid(np.zeros((size, size)), res, -half, -half)
    xs, ys = grid.centres()
    wx, wy = state.to_world_frame(xs, ys)
    return LocalGrid(world.class_at(wx, wy, outside=outside), res, -half, -half)


__all__ = [
    "CameraModel", "ClassProbMaps", "NoiseConfig", "LidarConfig", "LocalGrid",
    "render_semantics", "render_labels", "sample_pointcloud", "crop_elevation", "crop_classes",
    "voxelize", "cloud_to_world", "ROBOT_HEIGHT", "SENSOR_HEIGHT",
]
