"""Closed-loop navigation executive.

Perception and generation run at separate simulated rates. Traversed
waypoints keep frozen costs, and the remaining ones are re-scored. A new
plan replaces the current one only when it beats it by a hysteresis margin.
Empty candidate sets trigger a recovery rotation, and a pure-pursuit
follower stands in for the local planner.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .geometry_filter import FilterConfig, filter_collisions, recovery_direction
from .navae import sample_trajectories
from .perception import OBS_INTERVAL, SensorBuffer, polar_goal
from .planning import PlannerConfig, plan_path
from .selector import (ClassCostTable, SelectorConfig, build_costmap, project_points, select_best,
                       waypoint_costs)
from .sim.robot import MAX_ACCEL, MAX_SPEED, RobotState, step_robot, wrap_angle
from .sim.sensors import CameraModel, NoiseConfig, crop_elevation, render_semantics


@dataclass(frozen=True)
class ExecutiveConfig:
    f_gen: float = 0.5
    f_clip: float = 2.5
    epsilon: float = 0.5
    recovery_trigger: int = 2
    lookahead: float = 1.5
    goal_tolerance: float = 5.0
    dt_sim: float = 0.1
    reach_radius: float = 0.5
    timeout_factor: float = 4.0
    min_timeout: float = 30.0
    K: int = 50
    cruise_speed: float = 1.2
    rotate_speed: float = 1.0
    heading_tol: float = 0.1
    recovery_probe: float = 12.0  # straight-line clearance a recovery heading must have (m)
    max_turn: float = math.pi / 3  # larger bearing errors turn in place
    force_switch: bool = False  # FixF: adopt the best candidate at every generation tick
    rescore: str = "original"  # "original" discount exponents or "reindex" from the next waypoint
    unseen: str = "keep"  # future waypoints out of view on a perception tick: "c_u" or "keep" their last cost
    camera_width: int = 320
    camera_height: int = 240
    accel_limit: float = 0.5
    heatmap_threshold: float = 1.0
    sample_velocities: bool = False  # False: latent draws decoded with mean velocities
    log_costmaps: bool = False
    costmap_thin: int = 8

    def __post_init__(self):
        if not (self.f_clip >= self.f_gen > 0):
            raise ValueError("rates must satisfy f_clip >= f_gen > 0")
        if not self.force_switch and not self.epsilon > 0:
            raise ValueError("epsilon must be positive (use force_switch for the FixF variant)")
        if self.recovery_trigger < 1:
            raise ValueError("recovery trigger count must be >= 1")
        if self.rescore not in ("original", "reindex"):
            raise ValueError("rescore must be 'original' or 'reindex'")
        if self.unseen not in ("c_u", "keep"):
            raise ValueError("unseen must be 'c_u' or 'keep'")
        for name in ("f_gen", "f_clip"):
            steps = 1.0 / (getattr(self, name) * self.dt_sim)
            if abs(steps - round(steps)) > 1e-9:
                raise ValueError(f"1/{name} must be a whole number of simulation steps")

    @property
    def clip_every(self):
        return int(round(1.0 / (self.f_clip * self.dt_sim)))

    @property
    def gen_every(self):
        return int(round(1.0 / (self.f_gen * self.dt_sim)))

    @classmethod
    def fixf(cls, **kw):
        return cls(force_switch=True, epsilon=-math.inf, **kw)


# ---------------------------------------------------------------- plan + ledger


@dataclass(frozen=True)
class LedgerEntry:
    j: int  # discount exponent fixed at adoption
    cost: float  # undiscounted waypoint cost
    contrib: float  # gamma**j * cost
    frozen: bool = False


@dataclass(frozen=True)
class ActivePlan:
    waypoints: np.ndarray  # (N, 2) world frame
    origin: tuple  # world position of the robot at adoption
    ledger: tuple  # LedgerEntry per waypoint
    next_idx: int
    j_goal: float
    adopted_at: float = 0.0

    @property
    def exhausted(self):
        return self.next_idx >= len(self.waypoints)

    @property
    def frozen_sum(self):
        return sum(e.contrib for e in self.ledger if e.frozen)

    @property
    def future_sum(self):
        return sum(e.contrib for e in self.ledger if not e.frozen)

    @property
    def running_cost(self):
        return self.frozen_sum + self.future_sum + self.j_goal


def adopt(selection, state: RobotState, t=0.0) -> ActivePlan:
    """Re-anchor a selected robot-frame trajectory to the world frame at ``state``."""
    w = np.asarray(selection.trajectory.waypoints, dtype=float)
    wx, wy = state.to_world_frame(w[:, 0], w[:, 1])
    ledger = tuple(LedgerEntry(r["j"], r["cost"], r["contrib"]) for r in selection.records)
    return ActivePlan(np.stack([wx, wy], axis=-1), (state.x, state.y), ledger, 0, selection.j_goal, t)


def freeze_through(plan: ActivePlan, idx) -> ActivePlan:
    """Freeze ledger entries up to (excluding) ``idx`` and advance the cursor."""
    if idx <= plan.next_idx:
        return plan
    ledger = tuple(replace(e, frozen=True) if k < idx else e for k, e in enumerate(plan.ledger))
    return replace(plan, ledger=ledger, next_idx=idx)


def tick_perception(plan: ActivePlan | None, costmap, cam: CameraModel, state: RobotState,
                    sel_cfg: SelectorConfig = SelectorConfig(), cfg: ExecutiveConfig = ExecutiveConfig()):
    """Re-score the future waypoints of ``plan`` against a fresh cost image."""
    if plan is None or plan.exhausted:
        return plan
    fut = np.arange(plan.next_idx, len(plan.waypoints))
    rx, ry = state.to_robot_frame(plan.waypoints[fut, 0], plan.waypoints[fut, 1])
    px, vis = project_points(np.stack([rx, ry], axis=-1), cam)
    image = getattr(costmap, "image", costmap)
    cost, _ = waypoint_costs(px, vis, image, sel_cfg)
    ledger = list(plan.ledger)
    for n, (k, c, seen) in enumerate(zip(fut, cost, vis)):
        if not seen and cfg.unseen == "keep":
            continue
        j = ledger[k].j if cfg.rescore == "original" else n + 1
        ledger[k] = LedgerEntry(ledger[k].j, float(c), float(sel_cfg.gamma ** j * c))
    return replace(plan, ledger=tuple(ledger))


def decide_switch(j_curr, j_new, epsilon):
    """Adopt the new plan iff J_new < J_curr - epsilon."""
    return j_new < j_curr - epsilon


@dataclass
class GenerationOutcome:
    n_candidates: int
    n_feasible: int
    reasons: dict
    selection: object = None
    j_curr: float | None = None
    adopted: bool = False
    switched: bool = False


def tick_generation(plan: ActivePlan | None, candidates, state: RobotState, elev, costmap, cam: CameraModel,
                    goal_xy, sel_cfg: SelectorConfig = SelectorConfig(), filt_cfg: FilterConfig = FilterConfig(),
                    cfg: ExecutiveConfig = ExecutiveConfig(), t=0.0):
    """Filter, select and (maybe) adopt. Returns ``(plan, GenerationOutcome)``.

    ``candidates`` are robot-frame trajectories drawn by the caller.
    """
    feasible, verdicts = filter_collisions(candidates, elev, filt_cfg)
    reasons = {}
    for v in verdicts:
        reasons[v.reason] = reasons.get(v.reason, 0) + 1
    out = GenerationOutcome(len(candidates), len(feasible), dict(sorted(reasons.items())))
    sel = select_best(feasible, costmap, cam, polar_goal(state, goal_xy), sel_cfg)
    out.selection = sel
    if sel is None:
        return plan, out
    if plan is None or plan.exhausted:
        out.adopted = True
    else:
        out.j_curr = plan.running_cost
        out.adopted = cfg.force_switch or decide_switch(out.j_curr, sel.total, cfg.epsilon)
        out.switched = out.adopted
    if out.adopted:
        plan = adopt(sel, state, t)
    return plan, out


# ---------------------------------------------------------------- follower


def _project_on_segment(p, a, b):
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return 1.0
    return float((p - a) @ ab) / L2


def lookahead_point(path, seg_start, pos, L):
    """First point on ``path`` (from segment ``seg_start``) at distance >= L from ``pos``.

    Falls back to the final path point.
    """
    pos = np.asarray(pos, dtype=float)
    for k in range(seg_start, len(path) - 1):
        a, b = path[k], path[k + 1]
        t0 = min(max(_project_on_segment(pos, a, b), 0.0), 1.0) if k == seg_start else 0.0
        d = b - a
        f = a - pos
        # solve |a + t d - pos| = L for the larger root t in [t0, 1]
        A = float(d @ d)
        if A == 0.0:
            continue
        B = 2.0 * float(f @ d)
        C = float(f @ f) - L * L
        disc = B * B - 4 * A * C
        if disc < 0:
            continue
        t = (-B + math.sqrt(disc)) / (2 * A)
        if t0 <= t <= 1.0:
            return a + t * d
    return np.asarray(path[-1], dtype=float)


def pursuit_command(state: RobotState, target, cfg: ExecutiveConfig, speed=None):
    """Pure-pursuit (v, omega) towards a world-frame target point."""
    lx, ly = state.to_robot_frame(float(target[0]), float(target[1]))
    dist = math.hypot(lx, ly)
    if dist < 1e-9:
        return 0.0, 0.0
    alpha = math.atan2(ly, lx)
    if abs(alpha) > cfg.max_turn:
        return 0.0, math.copysign(cfg.rotate_speed, alpha)
    v = min(cfg.cruise_speed if speed is None else speed, MAX_SPEED)
    v_eff = max(min(v, state.v + MAX_ACCEL * cfg.dt_sim), 0.2)
    kappa = 2.0 * math.sin(alpha) / max(dist, 1e-6)
    return v, v_eff * kappa


def follow(plan: ActivePlan, state: RobotState, cfg: ExecutiveConfig = ExecutiveConfig()):
    """Advance the traversal cursor and pursue the lookahead point.

    Returns ``(command, plan)``; an exhausted plan yields a zero command.
    A waypoint counts as traversed once the robot is within
    ``reach_radius`` of it or has passed it along its incoming segment.
    """
    pos = np.array([state.x, state.y])
    path = np.concatenate([np.asarray(plan.origin, dtype=float)[None], plan.waypoints])
    idx = plan.next_idx
    while idx < len(plan.waypoints):
        wp = plan.waypoints[idx]
        if math.hypot(*(pos - wp)) <= cfg.reach_radius or _project_on_segment(pos, path[idx], path[idx + 1]) >= 1.0:
            idx += 1
        else:
            break
    plan = freeze_through(plan, idx)
    if plan.exhausted:
        return (0.0, 0.0), plan
    target = lookahead_point(path, plan.next_idx, pos, cfg.lookahead)
    return pursuit_command(state, target, cfg), plan


# ---------------------------------------------------------------- oracle rollout


@dataclass
class Rollout:
    states: list
    success: bool
    collided: bool
    path: np.ndarray | None

    @property
    def duration(self):
        return self.states[-1].t - self.states[0].t if self.states else 0.0

    @property
    def length(self):
        return path_length(self.states)


def path_length(states):
    if len(states) < 2:
        return 0.0
    xy = np.array([[s.x, s.y] for s in states])
    return float(np.hypot(*np.diff(xy, axis=0).T).sum())


def oracle_rollout(world, start: RobotState, goal_xy, cfg: ExecutiveConfig = ExecutiveConfig(), tolerance=None,
                   planner_cfg: PlannerConfig = PlannerConfig(), class_costs=None, max_time=600.0):
    """Drive the grid planner's path with the same follower (reference run)."""
    tol = cfg.goal_tolerance if tolerance is None else tolerance
    states = [start]
    if math.hypot(start.x - goal_xy[0], start.y - goal_xy[1]) <= tol:
        return Rollout(states, True, False, np.array([[start.x, start.y]]))
    res = plan_path(world, (start.x, start.y), goal_xy, planner_cfg, class_costs)
    if res is None:
        return Rollout(states, False, False, None)
    path = res.path
    seg = 0
    state = start
    n_max = int(round(max_time / cfg.dt_sim))
    for _ in range(n_max):
        pos = np.array([state.x, state.y])
        while seg < len(path) - 2 and _project_on_segment(pos, path[seg], path[seg + 1]) >= 1.0:
            seg += 1
        cmd = pursuit_command(state, lookahead_point(path, seg, pos, cfg.lookahead), cfg)
        state, hit = step_robot(state, cmd, cfg.dt_sim, world)
        states.append(state)
        if hit:
            return Rollout(states, False, True, path)
        if math.hypot(state.x - goal_xy[0], state.y - goal_xy[1]) <= tol:
            return Rollout(states, True, False, path)
    return Rollout(states, False, False, path)


# ---------------------------------------------------------------- episode log


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


@dataclass
class EpisodeLog:
    events: list = field(default_factory=list)

    def emit(self, t, kind, payload):
        self.events.append({"t": round(float(t), 6), "type": kind, "payload": _clean(payload)})

    def of_type(self, kind):
        return [e for e in self.events if e["type"] == kind]

    def to_lines(self):
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_lines())

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([json.loads(line) for line in fh if line.strip()])

    @property
    def summary(self):
        end = self.of_type("end")
        return end[-1]["payload"] if end else None

    def states(self):
        """(T, 5) array of logged (t, x, y, heading, v)."""
        return np.array([e["payload"]["s"] for e in self.of_type("state")], dtype=float).reshape(-1, 5)


def non_traversable_mask(world, table: ClassCostTable | None = None):
    """Per-class-id flag: soft or strict terrain (or a positive table cost)."""
    reg = world.registry
    out = np.zeros(max(c.id for c in reg.classes) + 1, dtype=bool)
    for c in reg.classes:
        costly = table is not None and table.cost_of(c.name, 0.0) > 0
        out[c.id] = c.strict or c.soft or costly
    return out


def count_non_traversable(world, points_world, mask=None):
    """Number of world points on non-traversable cells (off-map counts)."""
    mask = non_traversable_mask(world) if mask is None else mask
    p = np.asarray(points_world, dtype=float).reshape(-1, 2)
    cls = world.class_at(p[:, 0], p[:, 1], outside=-1)
    off = cls < 0
    return int(off.sum() + mask[cls[~off]].sum())


@dataclass(frozen=True)
class Injection:
    """Transient perception fault: ``relabel`` pairs applied while t < ``until``."""

    relabel: tuple = ()
    until: float = 0.0


def run_episode(world, model, cfg: ExecutiveConfig = ExecutiveConfig(), sel_cfg: SelectorConfig = SelectorConfig(),
                filt_cfg: FilterConfig = FilterConfig(), table: ClassCostTable = ClassCostTable(), seed=0,
                start: RobotState | None = None, goal=None, noise: NoiseConfig = NoiseConfig(),
                injection: Injection | None = None, oracle_time=None, timeout=None, log_path=None,
                candidate_fn=None, queries=None) -> EpisodeLog:
    """Simulate one closed-loop episode on a fixed simulated timeline.

    ``candidate_fn(bundle, state, seed) -> (kept, raw)`` overrides sampling
    from ``model`` (used by tests). The oracle reference time sets the
    timeout unless ``timeout`` is given.
    """
    log = EpisodeLog()
    start = start or RobotState(world.start[0], world.start[1], world.start_heading)
    goal_xy = tuple(float(g) for g in (goal if goal is not None else world.goal))
    cam = CameraModel.forward_facing(cfg.camera_width, cfg.camera_height)
    queries = tuple(table.names) if queries is None else tuple(queries)
    if timeout is None:
        if oracle_time is None:
            ref = oracle_rollout(world, start, goal_xy, cfg)
            oracle_time = ref.duration if ref.success else None
        timeout = max(cfg.timeout_factor * oracle_time, cfg.min_timeout) if oracle_time else 4 * cfg.min_timeout
    log.emit(0.0, "start", {
        "world_seed": world.seed, "start": start.to_list(), "goal": goal_xy, "seed": seed,
        "timeout": timeout, "oracle_time": oracle_time, "executive": asdict(cfg), "selector": asdict(sel_cfg),
        "filter": {"theta_max": filt_cfg.theta_max, "d_foot": filt_cfg.d_foot}, "costs": table.to_json(),
    })

    buffer = SensorBuffer(n_lidar=model.config.n_lidar if model is not None else 3,
                          n_history=model.config.n_history if model is not None else 10)
    obs_every = int(round(OBS_INTERVAL / cfg.dt_sim))
    nt_mask = non_traversable_mask(world)
    state = start
    plan = None
    costmap = None
    empties = 0
    rotate_to = None
    gen_requested = False
    counters = {"perception": 0, "generation": 0, "recoveries": 0, "switches": 0, "ntr_hits": 0, "ntr_total": 0}
    status = "timeout"
    n_steps = int(math.ceil(timeout / cfg.dt_sim - 1e-9))
    k = 0
    while True:
        t = k * cfg.dt_sim
        log.emit(t, "state", {"s": [t, state.x, state.y, state.heading, state.v]})
        if math.hypot(state.x - goal_xy[0], state.y - goal_xy[1]) <= cfg.goal_tolerance:
            status = "success"
            break
        if k >= n_steps:
            break
        if k % obs_every == 0:
            buffer.record(world, state, seed=seed * 1_000_003 + k)
        if k % cfg.clip_every == 0:
            active_noise = noise
            if injection is not None and t < injection.until:
                active_noise = replace(noise, relabel=injection.relabel)
            maps = render_semantics(world, state, cam, queries, active_noise, seed=seed * 7919 + k, timestamp=t)
            costmap = build_costmap(maps, table)
            before = plan.running_cost if plan is not None else None
            plan = tick_perception(plan, costmap, cam, state, sel_cfg, cfg)
            payload = {"tick": counters["perception"], "running_cost_before": before,
                       "running_cost": plan.running_cost if plan is not None else None,
                       "future": [[e.j, e.cost, e.contrib] for e in plan.ledger if not e.frozen] if plan else []}
            if cfg.log_costmaps:
                payload["costmap"] = costmap.image[::cfg.costmap_thin, ::cfg.costmap_thin]
            log.emit(t, "perception", payload)
            counters["perception"] += 1
        scheduled = k % cfg.gen_every == 0
        if (scheduled or gen_requested) and rotate_to is None:
            gen_requested = False
            bundle = buffer.bundle(state, goal_xy, model.seg if model is not None else None)
            gseed = seed * 100_003 + k
            if candidate_fn is not None:
                kept, raw = candidate_fn(bundle, state, gseed)
            else:
                kept, raw = sample_trajectories(model, bundle, cfg.K, gseed, cfg.accel_limit, cfg.heatmap_threshold,
                                                sample_velocities=cfg.sample_velocities, return_all=True)
            raw_w = [np.stack(state.to_world_frame(r.waypoints[:, 0], r.waypoints[:, 1]), axis=-1) for r in raw]
            hits = sum(count_non_traversable(world, w, nt_mask) for w in raw_w)
            total = sum(len(w) for w in raw_w)
            counters["ntr_hits"] += hits
            counters["ntr_total"] += total
            elev = crop_elevation(world, state, filt_cfg.extent, filt_cfg.res)
            plan, out = tick_generation(plan, kept, state, elev, costmap, cam, goal_xy, sel_cfg, filt_cfg, cfg, t)
            sel = out.selection
            log.emit(t, "generation", {
                "tick": counters["generation"], "scheduled": scheduled, "n_raw": len(raw), "n_kinematic": len(kept),
                "n_feasible": out.n_feasible, "verdicts": out.reasons, "ntr_hits": hits, "ntr_waypoints": total,
                "selected": sel.trajectory.index if sel is not None else None,
                "j_new": sel.total if sel is not None else None, "j_curr": out.j_curr,
                "adopted": out.adopted, "switched": out.switched,
            })
            counters["generation"] += 1
            if out.adopted:
                log.emit(t, "adopt", {"waypoints": plan.waypoints, "j_sem": sel.j_sem, "j_goal": sel.j_goal})
            if out.switched:
                counters["switches"] += 1
                log.emit(t, "switch", {"j_curr": out.j_curr, "j_new": sel.total})
            if out.n_feasible == 0:
                empties += 1
                if empties >= cfg.recovery_trigger:
                    empties = 0
                    counters["recoveries"] += 1
                    reach = 2.0 * (cfg.recovery_probe + filt_cfg.d_foot)
                    around = crop_elevation(world, state, reach, filt_cfg.res, back=reach / 2)
                    bearing = polar_goal(state, goal_xy)[1]
                    rotate_to = recovery_direction(state, bearing, around, filt_cfg, probe_length=cfg.recovery_probe)
                    plan = None
                    log.emit(t, "recovery", {"heading": rotate_to, "pose": state.to_list()})
            else:
                empties = 0

        if rotate_to is not None:
            err = wrap_angle(rotate_to - state.heading)
            if abs(err) <= cfg.heading_tol:
                rotate_to = None
                gen_requested = True
                cmd = (0.0, 0.0)
            else:
                cmd = (0.0, math.copysign(min(cfg.rotate_speed, abs(err) / cfg.dt_sim), err))
        elif plan is not None:
            was = plan.next_idx
            cmd, plan = follow(plan, state, cfg)
            for i in range(was, plan.next_idx):
                log.emit(t, "freeze", {"index": i, "cost": plan.ledger[i].cost, "contrib": plan.ledger[i].contrib})
            if plan.exhausted:
                gen_requested = True
        else:
            cmd = (0.0, 0.0)
        state, collided = step_robot(state, cmd, cfg.dt_sim, world)
        k += 1
        if collided:
            t = k * cfg.dt_sim
            log.emit(t, "state", {"s": [t, state.x, state.y, state.heading, state.v]})
            status = "collision"
            break

    states = log.states()
    length = float(np.hypot(*np.diff(states[:, 1:3], axis=0).T).sum()) if len(states) > 1 else 0.0
    log.emit(states[-1, 0], "end", {"status": status, "success": status == "success", "path_length": length,
                                    "t_nav": float(states[-1, 0]), **counters})
    if log_path is not None:
        log.write(log_path)
    return log


__all__ = [
    "ExecutiveConfig", "ActivePlan", "LedgerEntry", "adopt", "freeze_through", "tick_perception", "tick_generation",
    "decide_switch", "follow", "lookahead_point", "pursuit_command", "oracle_rollout", "Rollout", "EpisodeLog",
    "run_episode", "Injection", "non_traversable_mask", "count_non_traversable", "path_length",
]
