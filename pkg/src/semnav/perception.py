"""Assemble model observations (lidar stack, state history, polar goal, heatmap)."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .navae import ObservationBundle
from .segmentation import rasterize_heatmap
from .sim.robot import MAX_SPEED, RobotState, wrap_angle
from .sim.sensors import LidarConfig, sample_pointcloud

OBS_INTERVAL = 0.5


def polar_goal(state: RobotState, goal_xy):
    dx, dy = state.to_robot_frame(goal_xy[0], goal_xy[1])
    return np.array([math.hypot(dx, dy), wrap_angle(math.atan2(dy, dx))])


def history_matrix(states, current: RobotState, n=10):
    """(n, 4) rows of (x, y, vx/2, vy/2) in the current robot frame, oldest first.

    Missing history is padded with the oldest available state.
    """
    states = list(states)[-n:]
    while len(states) < n:
        states.insert(0, states[0] if states else current)
    out = np.zeros((n, 4))
    c, s = math.cos(current.heading), math.sin(current.heading)
    for k, st in enumerate(states):
        x, y = current.to_robot_frame(st.x, st.y)
        vx_w, vy_w = st.v * math.cos(st.heading), st.v * math.sin(st.heading)
        out[k] = (x, y, (c * vx_w + s * vy_w) / MAX_SPEED, (-s * vx_w + c * vy_w) / MAX_SPEED)
    return out


def cloud_in_frame(cloud, src: RobotState, dst: RobotState):
    """Re-express a sensor-frame cloud captured at ``src`` in the ``dst`` frame."""
    wx, wy = src.to_world_frame(cloud[:, 0], cloud[:, 1])
    x, y = dst.to_robot_frame(wx, wy)
    out = cloud.copy()
    out[:, 0], out[:, 1] = x, y
    return out


def build_heatmap(segmenter, clouds, poses, current: RobotState):
    merged = np.concatenate([cloud_in_frame(c, p, current) for c, p in zip(clouds, poses)])
    logits = segmenter.logits(merged)
    return rasterize_heatmap(merged, logits).grid


class SensorBuffer:
    """Rolling buffer of clouds and states recorded every ``OBS_INTERVAL`` seconds."""

    def __init__(self, n_lidar=3, n_history=10, lidar_cfg: LidarConfig = LidarConfig()):
        self.clouds = deque(maxlen=n_lidar)
        self.cloud_poses = deque(maxlen=n_lidar)
        self.states = deque(maxlen=n_history)
        self.n_lidar = n_lidar
        self.n_history = n_history
        self.lidar_cfg = lidar_cfg

    def record(self, world, state: RobotState, seed):
        self.clouds.append(sample_pointcloud(world, state, seed=seed, cfg=self.lidar_cfg))
        self.cloud_poses.append(state)
        self.states.append(state)

    def bundle(self, state: RobotState, goal_xy, segmenter=None) -> ObservationBundle:
        clouds = list(self.clouds)
        poses = list(self.cloud_poses)
        while len(clouds) < self.n_lidar:
            clouds.insert(0, clouds[0])
            poses.insert(0, poses[0])
        lidar = np.stack([cloud_in_frame(c, p, state) for c, p in zip(clouds, poses)])
        heatmap = build_heatmap(segmenter, clouds, poses, state) if segmenter is not None else None
        return ObservationBundle(lidar, history_matrix(self.states, state, self.n_history),
                                 polar_goal(state, goal_xy), heatmap)


__all__ = ["polar_goal", "history_matrix", "cloud_in_frame", "build_heatmap", "SensorBuffer", "OBS_INTERVAL"]
