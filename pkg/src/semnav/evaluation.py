"""Navigation metrics, multi-episode suites and CSV/SVG/JSON reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .executive import EpisodeLog, ExecutiveConfig, oracle_rollout, run_episode
from .geometry_filter import FilterConfig
from .selector import ClassCostTable, SelectorConfig
from .sim.robot import RobotState
from .sim.sensors import NoiseConfig

REFERENCE_NOTE = ("d_i and T_ref come from the grid-planner reference path driven by the same pure-pursuit follower "
                  "(no teleoperated demonstrations exist in simulation)")
VARIANTS = ("full", "basel", "nocol", "fixf")


# ---------------------------------------------------------------- metrics


def spl_term(success, d, p):
    """S * d / max(p, d); a successful zero-length episode scores 1."""
    if not success:
        return 0.0
    m = max(p, d)
    return 1.0 if m == 0 else d / m


def compute_spl(episodes):
    """Mean of S_i d_i / max(p_i, d_i) over (success, d, p) triples."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("SPL needs at least one episode")
    total = 0.0
    for s, d, p in episodes:
        total += spl_term(s, d, p)
    return total / len(episodes)


def preferred_mask(world, table: ClassCostTable, mode="soft", t_occ=2.0):
    """Per-class-id flag. ``strict``: cost-0 classes only; ``soft``: non-strict classes with cost <= T_occ."""
    reg = world.registry
    out = np.zeros(max(c.id for c in reg.classes) + 1, dtype=bool)
    for c in reg.classes:
        cost = table.cost_of(c.name, 0.0)
        if mode == "strict":
            out[c.id] = cost == 0 and not c.strict
        elif mode == "soft":
            out[c.id] = cost <= t_occ and not c.strict
        else:
            raise ValueError("mode must be 'strict' or 'soft'")
    return out


def compute_ept(path_xy, world, table: ClassCostTable = ClassCostTable(), mode="soft", t_occ=2.0):
    """Percent of executed-path samples whose centre lies on a preferred cell."""
    p = np.asarray(path_xy, dtype=float).reshape(-1, 2)
    if len(p) == 0:
        return 0.0
    mask = preferred_mask(world, table, mode, t_occ)
    cls = world.class_at(p[:, 0], p[:, 1], outside=-1)
    ok = (cls >= 0) & mask[np.clip(cls, 0, None)]
    return 100.0 * float(ok.sum()) / len(p)


def compute_ntr(hits, total):
    if total <= 0:
        raise ValueError("NTR needs at least one generated waypoint")
    return 100.0 * hits / total


@dataclass
class EpisodeMetrics:
    world: str
    variant: str
    repeat: int
    seed: int
    success: bool
    collision: bool
    path_length: float
    ref_length: float
    spl: float
    ept_strict: float
    ept_soft: float
    ntr: float
    ntr_hits: int
    ntr_total: int
    t_nav: float
    t_ref: float
    t_ratio: float
    recoveries: int
    switches: int


def episode_metrics(log: EpisodeLog, world, ref_length, t_ref, table=ClassCostTable(), t_occ=2.0, world_name="",
                    variant="", repeat=0, seed=0) -> EpisodeMetrics:
    end = log.summary
    states = log.states()
    xy = states[:, 1:3]
    ok = bool(end["success"])
    ntr = compute_ntr(end["ntr_hits"], end["ntr_total"]) if end["ntr_total"] > 0 else 0.0
    return EpisodeMetrics(
        world_name, variant, repeat, seed, ok, end["status"] == "collision", end["path_length"], ref_length,
        spl_term(ok, ref_length, end["path_length"]), compute_ept(xy, world, table, "strict", t_occ),
        compute_ept(xy, world, table, "soft", t_occ), ntr, end["ntr_hits"], end["ntr_total"], end["t_nav"], t_ref,
        end["t_nav"] / t_ref if ok and t_ref > 0 else 0.0, end["recoveries"], end["switches"])


def aggregate(metrics):
    """SR, SPL, EPT (mean), NTR (pooled over all waypoints), T_ratio (mean over successes), #RB (sum)."""
    metrics = list(metrics)
    n = len(metrics)
    succ = [m for m in metrics if m.success]
    hits = sum(m.ntr_hits for m in metrics)
    total = sum(m.ntr_total for m in metrics)
    return {
        "episodes": n,
        "sr": 100.0 * len(succ) / n if n else 0.0,
        "spl": compute_spl((m.success, m.ref_length, m.path_length) for m in metrics) if n else 0.0,
        "ept_strict": float(np.mean([m.ept_strict for m in metrics])) if n else 0.0,
        "ept_soft": float(np.mean([m.ept_soft for m in metrics])) if n else 0.0,
        "ntr": compute_ntr(hits, total) if total else 0.0,
        "t_ratio": float(np.mean([m.t_ratio for m in succ])) if succ else 0.0,
        "recoveries": sum(m.recoveries for m in metrics),
        "switches": sum(m.switches for m in metrics),
        "collisions": sum(m.collision for m in metrics),
    }


SUMMARY_COLUMNS = ("variant", "episodes", "sr", "spl", "ept_strict", "ept_soft", "ntr", "t_ratio", "recoveries",
                   "switches", "collisions")
EPISODE_COLUMNS = tuple(EpisodeMetrics.__dataclass_fields__)


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------- SVG


SVG_COLOURS = {"pavement": "#d9d9d9", "grass": "#9fd39a", "sand": "#eedd99", "tree": "#2e6b2e", "wall": "#555555",
               "hole": "#222244", "stairs": "#aa7744", "person": "#cc4444"}


def episode_svg(world, log: EpisodeLog, scale=4.0):
    """World raster, executed path, adopted plans and recovery markers.

    Coordinates inside the ``world`` group are world metres (y up).
    """
    H, W = world.shape
    cs = world.cell_size
    wm, hm = W * cs, H * cs
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{wm * scale:.0f}" height="{hm * scale:.0f}" '
           f'viewBox="0 0 {wm!r} {hm!r}">',
           f'<g id="world" transform="matrix(1 0 0 -1 0 {hm!r})">']
    names = {c.id: c.name for c in world.registry.classes}
    for iy in range(H):
        row = world.classes[iy]
        start = 0
        for ix in range(1, W + 1):
            if ix == W or row[ix] != row[start]:
                colour = SVG_COLOURS.get(names.get(int(row[start]), ""), "#ffffff")
                out.append(f'<rect x="{start * cs:.4g}" y="{iy * cs:.4g}" width="{(ix - start) * cs:.4g}" '
                           f'height="{cs:.4g}" fill="{colour}"/>')
                start = ix
    for e in log.of_type("adopt"):
        pts = " ".join(f"{x!r},{y!r}" for x, y in e["payload"]["waypoints"])
        out.append(f'<polyline class="plan" points="{pts}" fill="none" stroke="#3366cc" stroke-width="0.1"/>')
    states = log.states()
    pts = " ".join(f"{x!r},{y!r}" for x, y in states[:, 1:3].tolist())
    out.append(f'<polyline id="executed" points="{pts}" fill="none" stroke="#d62728" stroke-width="0.2"/>')
    for e in log.of_type("recovery"):
        x, y = e["payload"]["pose"][:2]
        out.append(f'<circle class="recovery" cx="{x!r}" cy="{y!r}" r="0.6" fill="none" stroke="#ff7f0e" '
                   f'stroke-width="0.15"/>')
    start = log.of_type("start")[0]["payload"]
    gx, gy = start["goal"]
    out.append(f'<circle id="goal" cx="{gx!r}" cy="{gy!r}" r="0.5" fill="#ffbf00"/>')
    out.append("</g></svg>")
    return "\n".join(out) + "\n"


def parse_svg_path(svg_text, element_id="executed"):
    """(N, 2) points of a polyline in an SVG produced by :func:`episode_svg`."""
    key = f'id="{element_id}" points="'
    i = svg_text.index(key) + len(key)
    j = svg_text.index('"', i)
    return np.array([[float(v) for v in p.split(",")] for p in svg_text[i:j].split()])


# ---------------------------------------------------------------- suites


@dataclass(frozen=True)
class Variant:
    name: str
    model_key: str
    exec_cfg: ExecutiveConfig


def default_variants(exec_cfg: ExecutiveConfig = ExecutiveConfig(), names=VARIANTS):
    """full / basel / nocol use their own checkpoints; fixf reuses the full model."""
    out = []
    for n in names:
        if n == "fixf":
            cfg = ExecutiveConfig.fixf(**{k: v for k, v in asdict(exec_cfg).items()
                                         if k not in ("force_switch", "epsilon")})
            out.append(Variant(n, "full", cfg))
        elif n in ("full", "basel", "nocol"):
            out.append(Variant(n, n, exec_cfg))
        else:
            raise ValueError(f"unknown variant {n!r}")
    return out


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode("utf-8")).hexdigest()[:16]


def episode_seed(seed, world_idx, repeat):
    return int(seed) * 10_007 + world_idx * 101 + repeat


def run_suite(worlds, models, variants, repeats=6, seed=7, out_dir=None, sel_cfg=SelectorConfig(),
              filt_cfg=FilterConfig(), table=ClassCostTable(), noise=NoiseConfig(), write_svg=True, progress=None,
              checkpoints=None):
    """Run every variant on every world ``repeats`` times.

    ``worlds`` is a list of (name, WorldModel); ``models`` maps model keys
    to trained models (every variant's key must be present). Returns the
    report dict; with ``out_dir`` also writes summary.csv, episodes.csv,
    summary.json, logs/*.jsonl and svg/*.svg.
    """
    missing = sorted({v.model_key for v in variants} - set(models))
    if missing:
        raise ValueError(f"no model for {missing}; refusing to start the suite")
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "logs"), exist_ok=True)
        if write_svg:
            os.makedirs(os.path.join(out_dir, "svg"), exist_ok=True)
    refs = []
    for name, world in worlds:
        start = RobotState(world.start[0], world.start[1], world.start_heading)
        roll = oracle_rollout(world, start, world.goal, variants[0].exec_cfg if variants else ExecutiveConfig())
        refs.append((roll.length, roll.duration if roll.success else float("nan")))
    per_episode = []
    for var in variants:
        for wi, (wname, world) in enumerate(worlds):
            ref_len, t_ref = refs[wi]
            for r in range(repeats):
                es = episode_seed(seed, wi, r)
                log = run_episode(world, models[var.model_key], var.exec_cfg, sel_cfg, filt_cfg, table, seed=es,
                                  noise=noise, oracle_time=t_ref if math.isfinite(t_ref) else None)
                m = episode_metrics(log, world, ref_len, t_ref, table, sel_cfg.t_occ, wname, var.name, r, es)
                per_episode.append(m)
                if out_dir is not None:
                    stem = f"{var.name}_{wname}_{r}"
                    log.write(os.path.join(out_dir, "logs", stem + ".jsonl"))
                    if write_svg:
                        with open(os.path.join(out_dir, "svg", stem + ".svg"), "w", encoding="utf-8") as fh:
                            fh.write(episode_svg(world, log))
                if progress is not None:
                    progress(m)
    summary_rows = []
    for var in variants:
        agg = aggregate(m for m in per_episode if m.variant == var.name)
        summary_rows.append({"variant": var.name, **agg})
    report = {
        "reference": REFERENCE_NOTE,
        "seed": seed, "repeats": repeats, "worlds": [n for n, _ in worlds],
        "mandatory": {"theta_max_deg": math.degrees(filt_cfg.theta_max), "d_foot": filt_cfg.d_foot,
                      "epsilon": {v.name: v.exec_cfg.epsilon for v in variants}},
        "config_hashes": {v.name: _hash(asdict(v.exec_cfg)) for v in variants},
        "selector": asdict(sel_cfg), "costs": table.to_json(),
        "checkpoints": checkpoints or {},
        "summary": summary_rows,
    }
    if out_dir is not None:
        with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8") as fh:
            fh.write(f"# {REFERENCE_NOTE}\n")
            fh.write(csv_text(summary_rows, SUMMARY_COLUMNS))
        with open(os.path.join(out_dir, "episodes.csv"), "w", encoding="utf-8") as fh:
            fh.write(csv_text([asdict(m) for m in per_episode], EPISODE_COLUMNS))
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1, sort_keys=True, default=str)
    report["episodes"] = per_episode
    return report


__all__ = [
    "compute_spl", "spl_term", "compute_ept", "compute_ntr", "preferred_mask", "EpisodeMetrics", "episode_metrics",
    "aggregate", "run_suite", "Variant", "default_variants", "episode_svg", "parse_svg_path", "csv_text",
    "SUMMARY_COLUMNS", "EPISODE_COLUMNS", "VARIANTS", "REFERENCE_NOTE",
]
