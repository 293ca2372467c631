"""Conditional VAE with a learned prior for multimodal trajectory generation.

Shapes used throughout (desk-scale defaults in brackets):

* lidar: (N_l [3], N_p [256], 4) sensor-frame clouds, oldest first
* history: (N_v [10], 4) = (x, y, vx, vy) in the current robot frame,
  velocities divided by 2 m/s
* goal: (rho, theta) polar goal in the robot frame
* heatmap: (90, 90) traversability grid, robot-centred

The decoder works in normalised velocity space (velocity / 2 m/s).
Positions are recovered by explicit Euler integration.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .diff import (
    AdamW,
    ExponentialLR,
    Tensor,
    bilinear_sample,
    concat,
    diag_gaussian_kl,
    gaussian_nll,
    load_checkpoint,
    logsumexp,
    no_grad,
    save_checkpoint,
    stack,
)
from .diff.nn import BiLSTM, GRUCell, LSTM, LayerNorm, Linear, MLP, Module
from .segmentation import HEATMAP_RES, HEATMAP_SIZE, HeatmapEncoder, PointSegModel
from .sim.robot import MAX_SPEED

log = logging.getLogger(__name__)

VEL_SCALE = MAX_SPEED
POS_SCALE = 10.0
GOAL_SCALE = 15.0
LOGVAR_MIN, LOGVAR_MAX = -10.0, 2.0
MASK_NEG = -1e30


class TrainingDivergedError(RuntimeError):
    pass


# ---------------------------------------------------------------- data types


@dataclass
class ObservationBundle:
    lidar: np.ndarray
    history: np.ndarray
    goal: np.ndarray
    heatmap: np.ndarray | None = None

    def __post_init__(self):
        self.lidar = np.asarray(self.lidar, dtype=float)
        self.history = np.asarray(self.history, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float).reshape(-1)
        if self.lidar.ndim != 3 or self.lidar.shape[-1] != 4 or self.lidar.shape[0] < 1:
            raise ValueError(f"lidar must be (N_l, N_p, 4), got {self.lidar.shape}")
        if self.history.ndim != 2 or self.history.shape[1] != 4 or self.history.shape[0] < 1:
            raise ValueError(f"history must be (N_v, 4), got {self.history.shape}")
        if self.goal.shape != (2,):
            raise ValueError("goal must be (rho, theta)")
        rho, theta = self.goal
        if rho < 0 or not (-math.pi < theta <= math.pi):
            raise ValueError(f"goal out of range: rho={rho}, theta={theta}")
        if self.heatmap is not None:
            self.heatmap = np.asarray(self.heatmap, dtype=float)


@dataclass
class LatentGaussian:
    mean: np.ndarray
    log_var: np.ndarray

    @property
    def std(self):
        return np.exp(0.5 * self.log_var)


@dataclass
class Trajectory:
    waypoints: np.ndarray  # (N_w, 2) metres, robot frame
    velocities: np.ndarray  # (N_w, 2) m/s
    dt: float = 1.0
    feasible: bool = True
    collision_filtered: bool = False
    index: int = 0
    costs: list | None = None

    @property
    def timestamps(self):
        return self.dt * np.arange(1, len(self.waypoints) + 1)

    def to_json(self):
        return {"index": self.index, "waypoints": self.waypoints.tolist(), "velocities": self.velocities.tolist()}


def integrate(velocities, dt=1.0, start=(0.0, 0.0)):
    """p_{t+1} = p_t + v_t * dt, evaluated sequentially."""
    velocities = np.asarray(velocities, dtype=float)
    out = np.empty_like(velocities)
    p = np.broadcast_to(np.asarray(start, dtype=float), velocities[..., 0, :].shape).copy()
    for t in range(velocities.shape[-2]):
        p = p + velocities[..., t, :] * dt
        out[..., t, :] = p
    return out


def velocities_from_waypoints(waypoints, dt=1.0):
    waypoints = np.asarray(waypoints, dtype=float)
    prev = np.concatenate([np.zeros_like(waypoints[..., :1, :]), waypoints[..., :-1, :]], axis=-2)
    return (waypoints - prev) / dt


# ---------------------------------------------------------------- config


@dataclass
class NaVAEConfig:
    feature_size: int = 64
    latent_size: int = 32
    decoder_hidden: int = 64
    n_lidar: int = 3
    n_points: int = 256
    n_history: int = 10
    n_waypoints: int = 12
    dt: float = 1.0
    seg_global_size: int = 64
    heatmap_size: int = HEATMAP_SIZE
    heatmap_res: float = HEATMAP_RES
    finetune_segmenter: bool = False
    seed: int = 0

    @classmethod
    def paper_scale(cls):
        return cls(feature_size=256, latent_size=512, decoder_hidden=256, n_points=2560, seg_global_size=256)


@dataclass
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-3
    lr_factor: float = 0.95
    lr_every: int = 10
    weight_decay: float = 1e-4
    batch_size: int = 16
    beta_max: float = 1.0
    warmup_frac: float = 0.1
    lam: float = 10.0  # collision weight
    recon: str = "lme"  # "lme" (log-mean-exp over GT set) or "sum" (standard per-GT NLL)
    kl_direction: str = "p||q"  # as printed; "q||p" is the conventional alternative
    col_sigma: float = 3.0  # Gaussian kernel over the semantic obstacle map, in cells
    col_eps: float = 1e-6
    max_gt: int = 8
    prior_decoder_grad: bool = True  # False: the prior term trains only the prior encoder
    teacher_forcing: str = "all"  # "all", "posterior" (prior path free-running) or "none"
    clip_norm: float = 10.0
    seed: int = 0
    K: int = 50
    accel_limit: float = 0.5

    def __post_init__(self):
        if self.lam < 0 or self.beta_max < 0:
            raise ValueError("collision weight and beta must be non-negative")
        if self.recon not in ("lme", "sum"):
            raise ValueError("recon must be 'lme' or 'sum'")
        if self.kl_direction not in ("p||q", "q||p"):
            raise ValueError("kl_direction must be 'p||q' or 'q||p'")
        if self.teacher_forcing not in ("all", "posterior", "none"):
            raise ValueError("teacher_forcing must be 'all', 'posterior' or 'none'")


def beta_schedule(epoch, epochs, beta_max=1.0, warmup_frac=0.1):
    """0 during warmup, then a linear ramp reaching ``beta_max`` at the last epoch."""
    warm = int(round(warmup_frac * epochs))
    if epoch < warm:
        return 0.0
    span = max(epochs - 1 - warm, 1)
    return beta_max * min(1.0, (epoch - warm) / span)


# ---------------------------------------------------------------- model


_LOGVAR_OFFSET = math.log(-LOGVAR_MIN / LOGVAR_MAX)  # raw 0 -> log-variance 0


def _soft_logvar(raw):
    """Smoothly squash raw outputs into [LOGVAR_MIN, LOGVAR_MAX]; raw 0 maps to 0."""
    return (raw + _LOGVAR_OFFSET).sigmoid() * (LOGVAR_MAX - LOGVAR_MIN) + LOGVAR_MIN


class NaVAE(Module):
    def __init__(self, config: NaVAEConfig = NaVAEConfig(), segmenter: PointSegModel | None = None):
        rng = np.random.default_rng(config.seed)
        F, Z, D = config.feature_size, config.latent_size, config.decoder_hidden
        seg = segmenter or PointSegModel(rng, global_size=config.seg_global_size)
        if seg.global_size != config.seg_global_size:  # a supplied segmenter fixes the feature width
            config = dataclasses.replace(config, seg_global_size=seg.global_size)
        self.config = config
        if config.finetune_segmenter:
            self.segmenter = seg
        else:
            self._segmenter = seg
        # prior encoder
        self.lidar_fc = Linear(config.n_lidar * seg.global_size, F, rng)
        self.goal_mlp = MLP([3, F, F], rng)
        self.traj_lstm = LSTM(4, F, rng)
        self.ctx_norm = LayerNorm(3 * F)
        self.ctx_mlp = MLP([3 * F, F, F + 2 * Z], rng)
        self.map_encoder = HeatmapEncoder(rng, feature_size=F, size=config.heatmap_size)
        # posterior encoder
        self.post_lstm = BiLSTM(2, F // 2, rng)
        self.post_fc = MLP([2 * (F // 2) + F, F, 2 * Z], rng)
        # decoder
        self.dec_init = Linear(Z + 2 * F, D, rng)
        self.dec_gru = GRUCell(Z + 2 * F + 2, D, rng)
        self.dec_out = Linear(D, 4, rng)

    @property
    def seg(self):
        return self.segmenter if self.config.finetune_segmenter else self._segmenter

    # -- prior ---------------------------------------------------------------

    def lidar_features(self, lidar):
        """(B, N_l, N_p, 4) -> (B, N_l * G) pooled backbone features."""
        lidar = np.asarray(lidar, dtype=float)
        B = lidar.shape[0]
        if self.config.finetune_segmenter:
            return self.seg.global_feature(lidar).reshape(B, -1)
        with no_grad():
            return Tensor(self.seg.global_feature(lidar).data.reshape(B, -1))

    def encode_prior(self, batch):
        """Returns ``(mu_p, logvar_p, h_x, h_map)`` tensors for a batch dict."""
        cfg = self.config
        feats = batch.get("lidar_feat")
        feats = Tensor(feats) if feats is not None else self.lidar_features(batch["lidar"])
        B = feats.shape[0]
        if feats.shape[1] != self.lidar_fc.weight.shape[0]:
            raise ValueError(f"lidar feature width {feats.shape[1]} does not match the model")
        h_lidar = self.lidar_fc(feats).relu()
        goal = np.asarray(batch["goal"], dtype=float)
        goal_in = np.stack([goal[:, 0] / GOAL_SCALE, np.cos(goal[:, 1]), np.sin(goal[:, 1])], axis=-1)
        h_goal = self.goal_mlp(Tensor(goal_in))
        hist = np.asarray(batch["history"], dtype=float).copy()
        if hist.ndim != 3 or hist.shape[2] != 4:
            raise ValueError(f"history batch must be (B, N_v, 4), got {hist.shape}")
        hist[..., :2] /= POS_SCALE
        _, (h_traj, _) = self.traj_lstm(Tensor(hist))
        h = self.ctx_norm(concat([h_lidar, h_goal, h_traj], axis=-1))
        out = self.ctx_mlp(h)
        F, Z = cfg.feature_size, cfg.latent_size
        h_x = out[:, :F].tanh()
        mu = out[:, F:F + Z]
        lv = _soft_logvar(out[:, F + Z:])
        h_map = self.map_encoder(np.asarray(batch["heatmap"], dtype=float).reshape(B, *batch["heatmap"].shape[-2:]))
        return mu, lv, h_x, h_map

    # -- posterior -----------------------------------------------------------

    def encode_posterior(self, waypoints, h_x):
        """waypoints (B, N_w, 2) metres; h_x (B, F). Returns (mu_q, logvar_q)."""
        waypoints = np.asarray(waypoints, dtype=float)
        if waypoints.ndim != 3 or waypoints.shape[1] < 2:
            raise ValueError("posterior needs at least two waypoints per trajectory")
        pooled = self.post_lstm(Tensor(waypoints / POS_SCALE))
        out = self.post_fc(concat([pooled, h_x], axis=-1))
        Z = self.config.latent_size
        return out[:, :Z], _soft_logvar(out[:, Z:])

    # -- decoder -------------------------------------------------------------

    def frozen_decoder(self):
        """Shallow copy whose decoder weights are constants (gradients stop there)."""
        clone = copy.copy(self)
        for name in ("dec_init", "dec_gru", "dec_out"):
            sub = copy.deepcopy(getattr(self, name))
            sub.set_requires_grad(False)
            setattr(clone, name, sub)
        return clone

    def decode(self, z, h_x, h_map, n_steps=None, teacher=None, sample_rng=None):
        """Autoregressive GRU decoder in normalised velocity space.

        ``teacher`` (B, T, 2) feeds ground-truth previous velocities; otherwise
        the previous mean (or a sample when ``sample_rng`` is given) is fed
        back. Returns ``(means, log_vars, fed)`` with means/log_vars as (B, T, 2)
        tensors and ``fed`` the (B, T, 2) velocities chosen at each step.
        """
        n_steps = n_steps or self.config.n_waypoints
        cond = concat([z, h_x, h_map], axis=-1)
        B = cond.shape[0]
        h = self.dec_init(cond).tanh()
        prev = Tensor(np.zeros((B, 2)))
        means, lvs, fed = [], [], []
        for t in range(n_steps):
            h = self.dec_gru(concat([cond, prev], axis=-1), h)
            out = self.dec_out(h)
            mu, lv = out[:, :2], _soft_logvar(out[:, 2:])
            means.append(mu)
            lvs.append(lv)
            if teacher is not None:
                prev = Tensor(np.asarray(teacher)[:, t])
            elif sample_rng is not None:
                eps = sample_rng.standard_normal((B, 2))
                prev = Tensor(mu.data + np.exp(0.5 * lv.data) * eps)
            else:
                prev = mu
            fed.append(prev.data)
        return stack(means, axis=1), stack(lvs, axis=1), np.stack(fed, axis=1)


# ---------------------------------------------------------------- loss


def smoothed_obstacle_map(classes, obstacle_lookup, sigma=3.0):
    """GK(M_sem): binary non-preferred mask (unknown cells count) smoothed by a Gaussian."""
    classes = np.asarray(classes)
    mask = np.where(classes < 0, 1.0, np.asarray(obstacle_lookup, dtype=float)[np.clip(classes, 0, None)])
    if sigma <= 0:
        return mask
    return gaussian_filter(mask, sigma, mode="nearest", truncate=3.0)


def map_coords(points_m, size=HEATMAP_SIZE, res=HEATMAP_RES):
    """Robot-frame metres -> (col, row) cell coordinates of a robot-centred grid
    whose first axis runs along x. Cell centres sit at integers."""
    origin = -size * res / 2.0
    row = (points_m[..., 0] - origin) / res - 0.5
    col = (points_m[..., 1] - origin) / res - 0.5
    return row, col


def collision_loss(waypoints, obstacle_maps, eps=1e-6, res=HEATMAP_RES):
    """log(sum_j GK(M)(p_j) + eps) per trajectory, with ``eps`` added per waypoint.

    ``waypoints`` is a (B, T, 2) tensor in metres; ``obstacle_maps`` (B, H, W).
    """
    size = obstacle_maps.shape[-1]
    origin = -size * res / 2.0
    rows = (waypoints[..., 0] - origin) * (1.0 / res) - 0.5
    cols = (waypoints[..., 1] - origin) * (1.0 / res) - 0.5
    pts = stack([cols, rows], axis=-1)
    vals = bilinear_sample(Tensor(obstacle_maps), pts)
    return (vals + eps).sum(axis=-1).log()


def _repeat_rows(t: Tensor, m):
    """(B, ...) -> (B*m, ...) repeating each row m times."""
    B = t.shape[0]
    idx = np.repeat(np.arange(B), m)
    return t[idx]


def loss_elbo(model: NaVAE, batch, beta, lam, tcfg: TrainConfig, rng):
    """Scalar training loss and its components.

    ``batch`` keys: lidar or lidar_feat, history, goal, heatmap, gt (B, M, N_w, 2)
    waypoints, gt_mask (B, M) booleans and obstacle (B, H, W) smoothed maps.
    """
    gt = np.asarray(batch["gt"], dtype=float)
    mask = np.asarray(batch["gt_mask"], dtype=bool)
    if gt.ndim != 4 or gt.shape[1] == 0 or not mask.any(axis=1).all():
        raise ValueError("every sample needs at least one ground-truth trajectory")
    B, M, T, _ = gt.shape
    dt = model.config.dt
    vel = velocities_from_waypoints(gt, dt) / VEL_SCALE  # (B, M, T, 2)
    flat_vel = vel.reshape(B * M, T, 2)
    counts = mask.sum(axis=1).astype(float)
    maskf = mask.astype(float)

    mu_p, lv_p, h_x, h_map = model.encode_prior(batch)
    Z = mu_p.shape[1]

    # prior reconstruction: one z_p per sample, scored against every GT
    z_p = mu_p + (lv_p * 0.5).exp() * Tensor(rng.standard_normal((B, Z)))
    hx_m, hmap_m = _repeat_rows(h_x, M), _repeat_rows(h_map, M)
    tf_prior = flat_vel if tcfg.teacher_forcing == "all" else None
    tf_post = flat_vel if tcfg.teacher_forcing in ("all", "posterior") else None
    dec = model if tcfg.prior_decoder_grad else model.frozen_decoder()
    means, lvs, _ = dec.decode(_repeat_rows(z_p, M), hx_m, hmap_m, T, teacher=tf_prior)
    nll_prior = gaussian_nll(means, lvs, Tensor(flat_vel), axis=(1, 2)).reshape(B, M)
    if tcfg.recon == "lme":
        logp = -nll_prior + Tensor((1.0 - maskf) * MASK_NEG)
        recon_prior = -(logsumexp(logp, axis=1) - np.log(counts)).mean()
    else:
        recon_prior = ((nll_prior * Tensor(maskf)).sum(axis=1) * Tensor(1.0 / counts)).mean()

    # posterior reconstruction and KL, averaged over the GT set
    mu_q, lv_q = model.encode_posterior(gt.reshape(B * M, T, 2), hx_m)
    z_q = mu_q + (lv_q * 0.5).exp() * Tensor(rng.standard_normal((B * M, Z)))
    means_q, lvs_q, _ = model.decode(z_q, hx_m, hmap_m, T, teacher=tf_post)
    nll_post = gaussian_nll(means_q, lvs_q, Tensor(flat_vel), axis=(1, 2))
    w = (maskf / counts[:, None]).reshape(-1) / B
    recon_post = (nll_post * Tensor(w)).sum()
    mu_pm, lv_pm = _repeat_rows(mu_p, M), _repeat_rows(lv_p, M)
    if tcfg.kl_direction == "p||q":
        kl_each = diag_gaussian_kl(mu_pm, lv_pm, mu_q, lv_q)
    else:
        kl_each = diag_gaussian_kl(mu_q, lv_q, mu_pm, lv_pm)
    kl = (kl_each * Tensor(w)).sum()

    # collision on the prior-decoded mean trajectory
    if lam > 0:
        mean_free, _, _ = model.decode(z_p, h_x, h_map, T)
        steps = mean_free * (VEL_SCALE * dt)
        pts = [steps[:, 0]]
        for t in range(1, T):
            pts.append(pts[-1] + steps[:, t])
        col = collision_loss(stack(pts, axis=1), np.asarray(batch["obstacle"], dtype=float), tcfg.col_eps).mean()
    else:
        col = Tensor(0.0)

    total = kl * beta + recon_prior + recon_post + col * lam
    parts = {
        "kl": kl.item(), "recon_prior": recon_prior.item(), "recon_post": recon_post.item(),
        "col": col.item(), "total": total.item(),
    }
    return total, parts


# ---------------------------------------------------------------- training


def _batch_from_samples(samples, idx, tcfg, rng):
    """Stack training-sample dicts (see dataset.sample_to_training) into a batch."""
    chosen = [samples[i] for i in idx]
    M = min(tcfg.max_gt, max(len(s["gt"]) for s in chosen))
    T = chosen[0]["gt"].shape[1]
    gt = np.zeros((len(chosen), M, T, 2))
    mask = np.zeros((len(chosen), M), dtype=bool)
    for b, s in enumerate(chosen):
        g = s["gt"]
        if len(g) > M:
            g = g[np.sort(rng.choice(len(g), size=M, replace=False))]
        gt[b, :len(g)] = g
        mask[b, :len(g)] = True
    batch = {
        "history": np.stack([s["history"] for s in chosen]),
        "goal": np.stack([s["goal"] for s in chosen]),
        "heatmap": np.stack([s["heatmap"] for s in chosen]),
        "obstacle": np.stack([s["obstacle"] for s in chosen]),
        "gt": gt,
        "gt_mask": mask,
    }
    if all("lidar_feat" in s for s in chosen):
        batch["lidar_feat"] = np.stack([s["lidar_feat"] for s in chosen])
    else:
        batch["lidar"] = np.stack([s["lidar"] for s in chosen])
    return batch


def precompute_lidar_features(model: NaVAE, samples):
    """Cache frozen-backbone features on each sample dict (no-op when fine-tuning)."""
    if model.config.finetune_segmenter:
        return samples
    for s in samples:
        if "lidar_feat" not in s:
            s["lidar_feat"] = model.lidar_features(s["lidar"][None]).data[0]
    return samples


CURVE_FIELDS = ("epoch", "beta", "lr", "kl", "recon_prior", "recon_post", "col", "total")


def train_navae(samples, tcfg: TrainConfig = TrainConfig(), mcfg: NaVAEConfig = NaVAEConfig(), segmenter=None,
                model=None, curves_csv=None, progress=None):
    """Train on a list of sample dicts. Returns ``(model, curves)``.

    ``curves`` holds one dict per epoch (sample-averaged components).
    """
    if not samples:
        raise ValueError("empty training set")
    model = model or NaVAE(mcfg, segmenter)
    precompute_lidar_features(model, samples)
    rng = np.random.default_rng(tcfg.seed)
    opt = AdamW(model.parameters(), lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    sched = ExponentialLR(opt, tcfg.lr_factor, tcfg.lr_every)
    curves = []
    n = len(samples)
    for epoch in range(tcfg.epochs):
        sched.step_epoch(epoch)
        beta = beta_schedule(epoch, tcfg.epochs, tcfg.beta_max, tcfg.warmup_frac)
        order = rng.permutation(n)
        acc = dict.fromkeys(("kl", "recon_prior", "recon_post", "col", "total"), 0.0)
        for start in range(0, n, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            batch = _batch_from_samples(samples, idx, tcfg, rng)
            opt.zero_grad()
            loss, parts = loss_elbo(model, batch, beta, tcfg.lam, tcfg, rng)
            if not all(np.isfinite(v) for v in parts.values()):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}: {parts}")
            loss.backward()
            opt.step(clip_norm=tcfg.clip_norm)
            for k in acc:
                acc[k] += parts[k] * len(idx) / n
        row = {"epoch": epoch, "beta": beta, "lr": opt.lr, **acc}
        curves.append(row)
        if progress is not None:
            progress(row)
    if curves_csv is not None:
        write_curves(curves, curves_csv)
    return model, curves


def write_curves(curves, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_FIELDS)
        writer.writeheader()
        for row in curves:
            writer.writerow({k: (f"{row[k]:.10g}" if isinstance(row[k], float) else row[k]) for k in CURVE_FIELDS})


# ---------------------------------------------------------------- sampling


def bundle_to_batch(bundle: ObservationBundle, heatmap_size=HEATMAP_SIZE):
    heatmap = bundle.heatmap if bundle.heatmap is not None else np.ones((heatmap_size, heatmap_size))
    return {
        "lidar": bundle.lidar[None], "history": bundle.history[None],
        "goal": bundle.goal[None], "heatmap": heatmap[None],
    }


def accel_ok(velocities, dt=1.0, limit=0.5, tol=1e-12, mode="speed"):
    """True iff every consecutive change stays within ``limit`` m/s^2.

    ``mode="speed"`` bounds the change of speed (the unicycle's linear
    acceleration limit; turning is bounded separately by the yaw-rate
    limit). ``mode="vector"`` bounds the full velocity-vector change.
    """
    v = np.asarray(velocities)
    if mode == "speed":
        dv = np.abs(np.diff(np.linalg.norm(v, axis=-1), axis=-1))
    elif mode == "vector":
        dv = np.linalg.norm(np.diff(v, axis=-2), axis=-1)
    else:
        raise ValueError("mode must be 'speed' or 'vector'")
    return np.all(dv / dt <= limit + tol, axis=-1)


def heatmap_ok(waypoints, heatmap, threshold=1.0, res=HEATMAP_RES):
    """True iff no in-window waypoint falls on a heatmap cell below ``threshold``."""
    heatmap = np.asarray(heatmap)
    n = heatmap.shape[0]
    origin = -n * res / 2.0
    i = np.floor((waypoints[..., 0] - origin) / res).astype(np.int64)
    j = np.floor((waypoints[..., 1] - origin) / res).astype(np.int64)
    inside = (i >= 0) & (i < n) & (j >= 0) & (j < n)
    vals = np.where(inside, heatmap[np.clip(i, 0, n - 1), np.clip(j, 0, n - 1)], np.inf)
    return np.all(vals >= threshold, axis=-1)


def sample_trajectories(model: NaVAE, bundle: ObservationBundle, K=50, seed=0, accel_limit=0.5,
                        heatmap_threshold=1.0, sample_velocities=True, return_all=False):
    """Draw K trajectories from the prior and drop infeasible ones.

    Returns the kept list (``return_all`` also returns every raw candidate,
    useful for pre-selection statistics).
    """
    rng = np.random.default_rng(seed)
    dt = model.config.dt
    with no_grad():
        mu, lv, h_x, h_map = model.encode_prior(bundle_to_batch(bundle, model.config.heatmap_size))
        eps = rng.standard_normal((K, mu.shape[1]))
        z = Tensor(mu.data + np.exp(0.5 * lv.data) * eps)
        rep = np.zeros(K, dtype=np.int64)
        _, _, fed = model.decode(z, h_x[rep], h_map[rep], sample_rng=rng if sample_velocities else None)
    vel = fed * VEL_SCALE
    wps = integrate(vel, dt)
    ok_acc = accel_ok(vel, dt, accel_limit)
    ok_map = heatmap_ok(wps, bundle.heatmap, heatmap_threshold, model.config.heatmap_res) if bundle.heatmap is not None else np.ones(K, bool)
    raw = [Trajectory(wps[k], vel[k], dt, feasible=bool(ok_acc[k] and ok_map[k]), index=k) for k in range(K)]
    kept = [t for t in raw if t.feasible]
    return (kept, raw) if return_all else kept


def prior_mean_trajectories(model: NaVAE, bundle: ObservationBundle, n=50, seed=0):
    """Latent draws decoded with mean velocities: (n, N_w, 2) waypoints."""
    rng = np.random.default_rng(seed)
    with no_grad():
        mu, lv, h_x, h_map = model.encode_prior(bundle_to_batch(bundle, model.config.heatmap_size))
        z = Tensor(mu.data + np.exp(0.5 * lv.data) * rng.standard_normal((n, mu.shape[1])))
        rep = np.zeros(n, dtype=np.int64)
        _, _, fed = model.decode(z, h_x[rep], h_map[rep])
    return integrate(fed * VEL_SCALE, model.config.dt)


# ---------------------------------------------------------------- checkpoints


def _config_tensor(obj):
    raw = json.dumps(obj, sort_keys=True).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float32)


def _config_from_tensor(arr):
    return json.loads(np.asarray(arr).astype(np.uint8).tobytes().decode("utf-8"))


def save_navae(path, model: NaVAE, extra_meta=None):
    tensors = {f"navae.{k}": v for k, v in model.state_dict().items()}
    tensors.update({f"seg.{k}": v for k, v in model.seg.state_dict().items()})
    meta = {"config": dataclasses.asdict(model.config), **(extra_meta or {})}
    tensors["meta/config_json"] = _config_tensor(meta)
    save_checkpoint(path, tensors)


def load_navae(path):
    tensors = load_checkpoint(path)
    meta = _config_from_tensor(tensors["meta/config_json"])
    cfg = NaVAEConfig(**meta["config"])
    seg = PointSegModel(np.random.default_rng(0), point_hidden=tensors["seg.point_mlp.layers.0.weight"].shape[1],
                        global_size=cfg.seg_global_size, head_hidden=tensors["seg.head.layers.0.weight"].shape[1])
    seg.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("seg.")})
    model = NaVAE(cfg, seg)
    model.load_state_dict({k[6:]: v for k, v in tensors.items() if k.startswith("navae.")})
    return model, meta


__all__ = [
    "ObservationBundle", "LatentGaussian", "Trajectory", "NaVAEConfig", "TrainConfig", "NaVAE",
    "integrate", "velocities_from_waypoints", "beta_schedule", "loss_elbo", "collision_loss",
    "smoothed_obstacle_map", "train_navae", "sample_trajectories", "prior_mean_trajectories",
    "accel_ok", "heatmap_ok", "save_navae", "load_navae", "TrainingDivergedError",
]
