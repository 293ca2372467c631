"""End-to-end helpers: corpus generation and the two training stages."""

from __future__ import annotations

import logging

import numpy as np

from .dataset import DatasetConfig, attach_heatmaps, generate_runs, to_training_dicts
from .navae import NaVAEConfig, TrainConfig, train_navae
from .segmentation import PointSegModel, SegTrainConfig, train_segmenter
from .sim.world import ClassRegistry, WorldSpec, generate_world

log = logging.getLogger(__name__)


def training_worlds(n, seed=0, spec: WorldSpec | None = None):
    spec = spec or WorldSpec(width_m=50.0, height_m=50.0, start=(5.0, 5.0), goal=(45.0, 45.0))
    return [generate_world(spec, seed * 1000 + k) for k in range(n)]


def build_corpus(worlds, runs_per_world=2, seed=0, cfg: DatasetConfig = DatasetConfig(), max_samples=None):
    samples = []
    for k, w in enumerate(worlds):
        samples.extend(generate_runs(w, runs_per_world, seed=seed * 100 + k, cfg=cfg))
        if max_samples is not None and len(samples) >= max_samples:
            return samples[:max_samples]
    return samples


def fit_segmenter(samples, cfg: SegTrainConfig = SegTrainConfig(), global_size=64):
    """Train the point segmenter on the newest cloud of every sample."""
    clouds = np.stack([s.lidar[-1] for s in samples])
    labels = np.stack([s.labels for s in samples])
    masks = np.stack([s.keep for s in samples])
    model = PointSegModel(np.random.default_rng(cfg.seed), global_size=global_size)
    return train_segmenter(clouds, labels, masks, cfg, model)


def fit_navae(samples, segmenter, tcfg: TrainConfig = TrainConfig(), mcfg: NaVAEConfig = NaVAEConfig(),
              registry=None, progress=None, curves_csv=None):
    attach_heatmaps(samples, segmenter)
    dicts = to_training_dicts(samples, registry or ClassRegistry(), tcfg.col_sigma)
    return train_navae(dicts, tcfg, mcfg, segmenter, curves_csv=curves_csv, progress=progress)


__all__ = ["training_worlds", "build_corpus", "fit_segmenter", "fit_navae"]
