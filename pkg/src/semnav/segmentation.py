"""PointNet-style traversability segmentation and heatmap rasterisation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .diff import AdamW, Tensor, concat, maxpool_points, no_grad, weighted_cross_entropy
from .diff.nn import Conv2d, Linear, MLP, Module
from .sim.robot import ROBOT_HEIGHT
from .sim.sensors import SENSOR_HEIGHT

log = logging.getLogger(__name__)

TRAVERSABLE, NON_TRAVERSABLE = 1, 0
HEIGHT_FILTER = 1.5

HEATMAP_SIZE = 90
HEATMAP_RES = 0.2
HEATMAP_SIGMA = 5.0
GAUSS_TRUNCATE = 3.0


# ---------------------------------------------------------------- labels


def label_points(cloud, world, state, robot_height=ROBOT_HEIGHT, sensor_height=SENSOR_HEIGHT):
    """Ground-truth labels from the world class grid.

    Returns ``(labels, keep)``: 1 = traversable (pavement or soft terrain),
    0 = non-traversable; points above 1.5x robot height or outside the map
    get ``keep``=False / label 0 respectively.
    """
    wx, wy = state.to_world_frame(cloud[:, 0], cloud[:, 1])
    z_ground = cloud[:, 2] + sensor_height + max(float(world.elevation_at(state.x, state.y, outside=0.0)), 0.0)
    cls = world.class_at(wx, wy, outside=-1)
    strict = world.registry.lookup("strict")
    inside = cls >= 0
    labels = np.zeros(len(cloud), dtype=np.int64)
    labels[inside] = np.where(strict[cls[inside]] > 0, NON_TRAVERSABLE, TRAVERSABLE)
    keep = z_ground <= HEIGHT_FILTER * robot_height
    return labels, keep


# ---------------------------------------------------------------- model


def normalise_points(points):
    scale = np.array([0.1, 0.1, 0.5, 1.0])
    return points * scale


class PointSegModel(Module):
    """Shared per-point MLP, max-pooled global feature, per-point head."""

    def __init__(self, rng, point_hidden=32, global_size=64, head_hidden=32):
        self.point_mlp = MLP([4, point_hidden, global_size], rng, final_activation=True)
        self.head = MLP([2 * global_size, head_hidden, 2], rng)
        self.global_size = global_size

    def features(self, clouds):
        """(..., N, 4) -> per-point features (..., N, G) and global (..., G)."""
        x = Tensor(normalise_points(np.asarray(clouds, dtype=float)))
        per_point = self.point_mlp(x)
        return per_point, maxpool_points(per_point, axis=-2)

    def global_feature(self, clouds):
        return self.features(clouds)[1]

    def __call__(self, clouds):
        per_point, glob = self.features(clouds)
        n = per_point.shape[-2]
        tiled = glob.reshape(glob.shape[:-1] + (1, glob.shape[-1])) * Tensor(np.ones((n, 1)))
        return self.head(concat([per_point, tiled], axis=-1))

    def logits(self, cloud):
        with no_grad():
            return self(cloud).data


def inverse_frequency_weights(labels, mask=None):
    labels = np.asarray(labels).ravel()
    if mask is not None:
        labels = labels[np.asarray(mask).ravel()]
    counts = np.bincount(labels, minlength=2).astype(float)
    if (counts == 0).any():
        raise ValueError("segmenter training needs both traversable and non-traversable points")
    return counts.sum() / counts


@dataclass
class SegTrainConfig:
    epochs: int = 60
    lr: float = 1e-2
    batch_size: int = 16
    seed: int = 0
    weight_decay: float = 1e-4


def train_segmenter(clouds, labels, masks=None, config: SegTrainConfig = SegTrainConfig(), model=None):
    """Fit the point segmenter with inverse-frequency weighted cross-entropy.

    ``clouds`` is (S, N, 4), ``labels`` (S, N) and ``masks`` (S, N) marks
    points that contribute to the loss. Returns ``(model, report)`` where the
    report holds per-class accuracy and the loss curve.
    """
    clouds = np.asarray(clouds, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    masks = np.ones(labels.shape, dtype=bool) if masks is None else np.asarray(masks, dtype=bool)
    weights = inverse_frequency_weights(labels, masks)
    rng = np.random.default_rng(config.seed)
    model = model or PointSegModel(rng)
    opt = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    curve = []
    n = len(clouds)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            opt.zero_grad()
            loss = weighted_cross_entropy(model(clouds[idx]), labels[idx], weights, masks[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        curve.append(total / n)
    report = segmenter_accuracy(model, clouds, labels, masks)
    report["loss_curve"] = curve
    report["class_weights"] = weights.tolist()
    log.info("segmenter accuracy %s", report["per_class_accuracy"])
    return model, report


def segmenter_accuracy(model, clouds, labels, masks):
    pred = np.argmax(model.logits(clouds), axis=-1)
    acc = {}
    for c, name in ((NON_TRAVERSABLE, "non_traversable"), (TRAVERSABLE, "traversable")):
        sel = (labels == c) & masks
        acc[name] = float((pred[sel] == c).mean()) if sel.any() else float("nan")
    overall = float((pred[masks] == labels[masks]).mean())
    return {"per_class_accuracy": acc, "accuracy": overall}


# ---------------------------------------------------------------- heatmap


@dataclass(frozen=True)
class TraversabilityHeatmap:
    grid: np.ndarray
    res: float = HEATMAP_RES
    sigma: float = HEATMAP_SIGMA

    @property
    def extent(self):
        return self.grid.shape[0] * self.res

    @property
    def origin(self):
        """Robot-frame coordinate of the grid's lower corner (robot-centred)."""
        return -self.extent / 2.0

    def index_of(self, x, y):
        i = np.floor((np.asarray(x) - self.origin) / self.res).astype(np.int64)
        j = np.floor((np.asarray(y) - self.origin) / self.res).astype(np.int64)
        return i, j

    def value_at(self, x, y, outside=np.nan):
        i, j = self.index_of(x, y)
        n = self.grid.shape[0]
        ok = (i >= 0) & (i < n) & (j >= 0) & (j < n)
        out = np.full(np.shape(i), outside, dtype=float)
        out[ok] = self.grid[i[ok], j[ok]]
        return out


def mean_logit_grids(cloud, logits, size=HEATMAP_SIZE, res=HEATMAP_RES):
    """Per-cell mean traversable score M+ and non-traversable score M-.

    A point's score is its logit margin ``l_trav - l_non``; points with a
    positive margin feed M+, the rest feed M- with the negated margin. Cells
    without points are 0.
    """
    cloud = np.asarray(cloud, dtype=float)
    logits = np.asarray(logits, dtype=float)
    m_plus = np.zeros((size, size))
    m_minus = np.zeros((size, size))
    if len(cloud) == 0:
        return m_plus, m_minus
    origin = -size * res / 2.0
    i = np.floor((cloud[:, 0] - origin) / res).astype(np.int64)
    j = np.floor((cloud[:, 1] - origin) / res).astype(np.int64)
    ok = (i >= 0) & (i < size) & (j >= 0) & (j < size)
    margin = logits[:, TRAVERSABLE] - logits[:, NON_TRAVERSABLE]
    flat = i * size + j
    for grid, sel, score in ((m_plus, ok & (margin > 0), margin), (m_minus, ok & (margin <= 0), -margin)):
        sums = np.bincount(flat[sel], weights=score[sel], minlength=size * size)
        counts = np.bincount(flat[sel], minlength=size * size)
        np.divide(sums, counts, out=grid.reshape(-1), where=counts > 0)
    return m_plus, m_minus


def rasterize_heatmap(cloud, logits, size=HEATMAP_SIZE, res=HEATMAP_RES, sigma=HEATMAP_SIGMA):
    """Smoothed traversability heatmap: G_sigma * (M+ - M- + 1), reflective borders."""
    m_plus, m_minus = mean_logit_grids(cloud, logits, size, res)
    grid = gaussian_filter(m_plus - m_minus + 1.0, sigma, mode="reflect", truncate=GAUSS_TRUNCATE)
    return TraversabilityHeatmap(grid, res, sigma)


class HeatmapEncoder(Module):
    """Three stride-2 convolutions then a linear projection to ``feature_size``."""

    def __init__(self, rng, feature_size=64, size=HEATMAP_SIZE, channels=(4, 8, 8)):
        c_in = 1
        self.convs = []
        n = size
        for c in channels:
            self.convs.append(Conv2d(c_in, c, 3, rng, stride=2, padding=1))
            c_in = c
            n = (n + 2 - 3) // 2 + 1
        self.proj = Linear(c_in * n * n, feature_size, rng)
        self.feature_size = feature_size

    def __call__(self, heatmaps):
        x = heatmaps if isinstance(heatmaps, Tensor) else Tensor(np.asarray(heatmaps, dtype=float))
        if x.ndim == 2:
            x = x.reshape(1, 1, *x.shape)
        elif x.ndim == 3:
            x = x.reshape(x.shape[0], 1, *x.shape[1:])
        x = x - 1.0  # centre the neutral heatmap value
        for conv in self.convs:
            x = conv(x).relu()
        return self.proj(x.reshape(x.shape[0], -1))


def heatmap_features(encoder, heatmaps):
    return encoder(heatmaps)
