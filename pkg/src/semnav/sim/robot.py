"""Unicycle robot kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

MAX_SPEED = 2.0
MAX_ACCEL = 0.5
ROBOT_RADIUS = 0.3
ROBOT_HEIGHT = 0.6


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    v: float = 0.0
    omega: float = 0.0
    t: float = 0.0

    def to_list(self):
        return [self.x, self.y, self.heading, self.v, self.omega, self.t]

    def to_robot_frame(self, wx, wy):
        """World points -> this pose's frame (x forward, y left)."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx, dy = wx - self.x, wy - self.y
        return c * dx + s * dy, -s * dx + c * dy

    def to_world_frame(self, rx, ry):
        c, s = math.cos(self.heading), math.sin(self.heading)
        return self.x + c * rx - s * ry, self.y + s * rx + c * ry


def step_robot(state, cmd, dt, world=None, max_speed=MAX_SPEED, max_accel=MAX_ACCEL, radius=ROBOT_RADIUS,
               max_omega=2.0):
    """Advance one step; returns ``(new_state, collided)``.

    The speed command is clamped to ``|v| <= max_speed`` and to an
    acceleration of at most ``max_accel`` from the current speed. Position
    uses midpoint-heading integration. When ``world`` is given, a strict
    cell under the footprint flags a collision.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_cmd, w_cmd = cmd
    v_cmd = max(-max_speed, min(max_speed, float(v_cmd)))
    dv = max(-max_accel * dt, min(max_accel * dt, v_cmd - state.v))
    v = state.v + dv
    w = max(-max_omega, min(max_omega, float(w_cmd)))
    mid = state.heading + 0.5 * w * dt
    x = state.x + v * math.cos(mid) * dt
    y = state.y + v * math.sin(mid) * dt
    new = replace(state, x=x, y=y, heading=wrap_angle(state.heading + w * dt), v=v, omega=w, t=state.t + dt)
    collided = bool(world is not None and world.footprint_hits_strict(x, y, radius))
    return new, collided
