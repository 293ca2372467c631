"""Small fixtures shared by the unit and acceptance tests."""

import copy

import numpy as np

from semnav.diff.gradcheck import relative_error
from semnav.navae import (
    NaVAE,
    NaVAEConfig,
    TrainConfig,
    Trajectory,
    loss_elbo,
    smoothed_obstacle_map,
    velocities_from_waypoints,
)
from semnav.segmentation import PointSegModel

TINY = NaVAEConfig(feature_size=8, latent_size=4, decoder_hidden=8, n_lidar=2, n_points=12, n_history=3,
                   n_waypoints=4, seg_global_size=6, heatmap_size=8, heatmap_res=0.5)


def tiny_model(seed=0, config=TINY):
    seg = PointSegModel(np.random.default_rng(seed + 100), point_hidden=6, global_size=config.seg_global_size,
                        head_hidden=6)
    cfg = NaVAEConfig(**{**config.__dict__, "seed": seed})
    return NaVAE(cfg, seg)


def tiny_batch(rng, B=2, M=3, config=TINY, ragged=True):
    T = config.n_waypoints
    steps = rng.uniform([0.5, -0.6], [1.5, 0.6], size=(B, M, T, 2))
    gt = np.cumsum(steps, axis=2)
    mask = np.ones((B, M), dtype=bool)
    if ragged and M > 1:
        mask[0, M - 1] = False
    classes = rng.integers(-1, 3, size=(B, config.heatmap_size, config.heatmap_size))
    obstacle = np.stack([smoothed_obstacle_map(c, [0.0, 1.0, 0.0], sigma=1.0) for c in classes])
    return {
        "lidar": rng.normal(size=(B, config.n_lidar, config.n_points, 4)),
        "history": rng.normal(size=(B, config.n_history, 4)) * 0.5,
        "goal": np.stack([rng.uniform(2, 20, size=B), rng.uniform(-3, 3, size=B)], axis=-1),
        "heatmap": 1.0 + rng.normal(size=(B, config.heatmap_size, config.heatmap_size)) * 0.3,
        "gt": gt,
        "gt_mask": mask,
        "obstacle": obstacle,
    }


def loss_param_gradcheck(model, batch, tcfg: TrainConfig, n_params=10, seed=0, eps=1e-6, beta=0.7, lam=None):
    """Relative errors between backprop and central differences for ``n_params``
    randomly chosen scalar parameters of the full training loss.

    The loss is evaluated with a freshly seeded generator each time so the
    reparameterisation noise is identical across evaluations.
    """
    lam = tcfg.lam if lam is None else lam

    def loss_value():
        return loss_elbo(model, batch, beta, lam, tcfg, np.random.default_rng(seed))[0]

    params = [p for p in model.parameters() if p.requires_grad]
    for p in params:
        p.grad = None
    loss_value().backward()
    rng = np.random.default_rng(seed + 1)
    errors = []
    picks = rng.choice(len(params), size=n_params, replace=len(params) < n_params)
    for k in picks:
        p = params[k]
        idx = tuple(int(rng.integers(0, s)) for s in p.data.shape)
        analytic = 0.0 if p.grad is None else float(p.grad[idx])
        orig = p.data[idx]
        p.data[idx] = orig + eps
        fp = float(loss_value().data)
        p.data[idx] = orig - eps
        fm = float(loss_value().data)
        p.data[idx] = orig
        errors.append(relative_error(analytic, (fp - fm) / (2 * eps), floor=1e-4))
    return errors


def straight_candidate(n=12, spacing=1.2, end_x=None, lateral=0.0, index=0):
    """Robot-frame straight-line Trajectory; ``end_x`` moves only the final waypoint."""
    x = spacing * np.arange(1, n + 1, dtype=float)
    if end_x is not None:
        x[-1] = end_x
    wps = np.stack([x, np.full(n, lateral)], axis=-1)
    return Trajectory(wps, velocities_from_waypoints(wps), index=index)


def fixed_candidates(*trajs):
    """A ``candidate_fn`` for ``run_episode`` that always proposes the same trajectories."""
    def fn(bundle, state, seed):
        out = [copy.deepcopy(t) for t in trajs]
        return out, out

    return fn


def gap_candidate(gap, alpha1, d_ref):
    """Straight candidate whose goal cost is exactly ``gap`` below that of ``straight_candidate()``.

    The goal lies ``d_ref`` metres beyond the reference endpoint on the x axis,
    so only the final waypoint moves: alpha1 * log(1 + d) drops by ``gap``.
    """
    d_new = (1.0 + d_ref) * np.exp(-gap / alpha1) - 1.0
    return straight_candidate(end_x=14.4 + (d_ref - d_new), index=1)


def hysteresis_run(gaps, epsilon=0.5, clip_per_gen=5, seed=0):
    """Stationary robot, one reference candidate A plus (optionally) a cheaper B.

    ``gaps[k]`` is B's cost advantage at generation tick k (None: only A).
    Perception ticks run ``clip_per_gen`` times between generation ticks.
    Returns the number of switches and the per-tick running cost.
    """
    from semnav.executive import ExecutiveConfig, tick_generation, tick_perception
    from semnav.geometry_filter import FilterConfig
    from semnav.selector import ClassCostTable, SelectorConfig, build_costmap
    from semnav.sim.robot import RobotState
    from semnav.sim.scenarios import flat_world
    from semnav.sim.sensors import CameraModel, NoiseConfig, crop_elevation, render_semantics

    world = flat_world()
    state = RobotState(world.start[0], world.start[1], 0.0)
    d_ref = 2.0
    goal_xy = (state.x + 14.4 + d_ref, state.y)
    cfg = ExecutiveConfig(epsilon=epsilon, camera_width=160, camera_height=120)
    sel, filt, table = SelectorConfig(), FilterConfig(), ClassCostTable()
    cam = CameraModel.forward_facing(cfg.camera_width, cfg.camera_height)
    elev = crop_elevation(world, state, filt.extent, filt.res)
    plan, switches, costs, k = None, 0, [], 0
    for tick, gap in enumerate(gaps):
        for _ in range(clip_per_gen):
            maps = render_semantics(world, state, cam, table.names, NoiseConfig(), seed=seed * 7919 + k)
            costmap = build_costmap(maps, table)
            plan = tick_perception(plan, costmap, cam, state, sel, cfg)
            k += 1
        cands = [straight_candidate(index=0)]
        if gap is not None:
            cands.append(gap_candidate(gap, sel.alpha1, d_ref))
        plan, out = tick_generation(plan, cands, state, elev, costmap, cam, goal_xy, sel, filt, cfg, t=tick * 2.0)
        switches += out.switched
        costs.append(plan.running_cost)
    return switches, costs
