"""Command-line entry points (``semnav <command> --help``)."""

from __future__ import annotations

import json
import logging
import os
import pickle
from dataclasses import asdict, fields

import click
import numpy as np

from .dataset import DatasetConfig, generate_runs, read_dataset, write_dataset
from .evaluation import VARIANTS, default_variants, run_suite
from .executive import ExecutiveConfig, run_episode
from .geometry_filter import FilterConfig
from .navae import NaVAEConfig, TrainConfig, load_navae, sample_trajectories, save_navae
from .perception import SensorBuffer
from .pipeline import fit_navae, fit_segmenter
from .segmentation import SegTrainConfig
from .selector import ClassCostTable, SelectorConfig
from .sim.robot import RobotState
from .sim.world import WorldSpec, generate_world, load_world, save_world


def _load_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _pick(cls, d):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in (d or {}).items() if k in names})


def _selector_and_table(cfg):
    sel = _pick(SelectorConfig, cfg.get("selector"))
    table = ClassCostTable()
    for name, cost in (cfg.get("costs") or {}).items():
        table = table.with_cost(name, float(cost))
    return sel, table


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Semantic trajectory-generation navigation toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command("gen-world")
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), help="WorldSpec JSON.")
def gen_world(seed, out, spec_path):
    """Generate a procedural world and save it as JSON."""
    world = generate_world(WorldSpec.from_dict(_load_config(spec_path)), seed)
    save_world(world, out)
    click.echo(f"world {world.shape[1]}x{world.shape[0]} cells -> {out}")


@main.command("gen-dataset")
@click.option("--world", "world_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--runs", type=int, default=15, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def gen_dataset(world_path, runs, seed, out):
    """Roll out reference runs on a world and slice them into samples."""
    world = load_world(world_path)
    cfg = DatasetConfig()
    samples = generate_runs(world, runs, seed=seed, cfg=cfg)
    manifest = write_dataset(out, samples, cfg, extra={"world": os.path.basename(world_path), "seed": seed})
    click.echo(f"{manifest['count']} samples, M distribution {manifest['m_distribution']} -> {out}")


def _read_many(dirs):
    samples = []
    for d in dirs:
        samples.extend(read_dataset(d)[0])
    if not samples:
        raise click.ClickException("no samples found")
    return samples


@main.command("train-seg")
@click.option("--data", multiple=True, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--epochs", type=int, default=SegTrainConfig.epochs, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def train_seg(data, epochs, seed, out):
    """Train the point-cloud traversability segmenter (pickled model)."""
    model, report = fit_segmenter(_read_many(data), SegTrainConfig(epochs=epochs, seed=seed))
    with open(out, "wb") as fh:
        pickle.dump(model, fh)
    click.echo(json.dumps({k: report[k] for k in ("per_class_accuracy", "class_weights")}))


@main.command("train-navae")
@click.option("--data", multiple=True, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--seg", "seg_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON with optional 'train' and 'model' sections.")
@click.option("--variant", type=click.Choice(["full", "basel", "nocol"]), default="full", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--curves", type=click.Path(dir_okay=False), help="Per-epoch loss components CSV.")
def train_navae_cmd(data, seg_path, config_path, variant, out, curves):
    """Train the trajectory generator; variants set recon/lambda for the ablations."""
    cfg = _load_config(config_path)
    train = dict(cfg.get("train") or {})
    if variant == "basel":
        train["recon"] = "sum"
    elif variant == "nocol":
        train["lam"] = 0.0
    tcfg = _pick(TrainConfig, train)
    mcfg = _pick(NaVAEConfig, cfg.get("model"))
    with open(seg_path, "rb") as fh:
        seg = pickle.load(fh)
    model, rows = fit_navae(_read_many(data), seg, tcfg, mcfg, curves_csv=curves)
    save_navae(out, model, {"train": asdict(tcfg), "variant": variant})
    click.echo(f"final loss {rows[-1]['total']:.4f} -> {out}")


@main.command("sample")
@click.option("--world", "world_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--k", "K", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def sample_cmd(world_path, ckpt, K, seed, out):
    """Draw K trajectories at the world's start pose and write them as JSON."""
    world = load_world(world_path)
    model, _ = load_navae(ckpt)
    state = RobotState(world.start[0], world.start[1], world.start_heading)
    buf = SensorBuffer(model.config.n_lidar, model.config.n_history)
    buf.record(world, state, seed)
    bundle = buf.bundle(state, world.goal, model.seg)
    kept, raw = sample_trajectories(model, bundle, K, seed, return_all=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump({"pose": state.to_list(), "trajectories": [dict(t.to_json(), feasible=t.feasible) for t in raw]},
                  fh)
    click.echo(f"{len(kept)}/{len(raw)} kinematically feasible -> {out}")


def _episode_configs(cfg):
    ex = _pick(ExecutiveConfig, cfg.get("executive"))
    filt = _pick(FilterConfig, cfg.get("filter"))
    if "theta_max_deg" in (cfg.get("filter") or {}):
        filt = FilterConfig(np.radians(cfg["filter"]["theta_max_deg"]), filt.d_foot, filt.extent, filt.res)
    sel, table = _selector_and_table(cfg)
    return ex, filt, sel, table


@main.command("run-episode")
@click.option("--world", "world_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def run_episode_cmd(world_path, ckpt, config_path, seed, out):
    """Run one closed-loop episode and write its JSON-lines log."""
    world = load_world(world_path)
    model, _ = load_navae(ckpt)
    ex, filt, sel, table = _episode_configs(_load_config(config_path))
    log = run_episode(world, model, ex, sel, filt, table, seed=seed, log_path=out)
    click.echo(json.dumps(log.summary, sort_keys=True))


@main.command("eval-suite")
@click.option("--worlds", "worlds_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False),
              help="Full-model checkpoint (also used by fixf).")
@click.option("--ckpt-basel", type=click.Path(dir_okay=False), help="Checkpoint trained with summed reconstruction.")
@click.option("--ckpt-nocol", type=click.Path(dir_okay=False), help="Checkpoint trained without collision loss.")
@click.option("--variants", default=",".join(VARIANTS), show_default=True)
@click.option("--repeats", type=int, default=6, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--no-svg", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def eval_suite(worlds_dir, ckpt, ckpt_basel, ckpt_nocol, variants, repeats, seed, config_path, no_svg, out):
    """Run the ablation suite over every world JSON in a directory."""
    names = [v.strip() for v in variants.split(",") if v.strip()]
    paths = {"full": ckpt, "basel": ckpt_basel, "nocol": ckpt_nocol}
    needed = {"full" if n == "fixf" else n for n in names}
    for key in sorted(needed):
        if not paths.get(key):
            raise click.ClickException(f"variant {key!r} needs a checkpoint (--ckpt{'' if key == 'full' else '-' + key})")
        if not os.path.exists(paths[key]):
            raise click.ClickException(f"checkpoint not found: {paths[key]}")
    models = {key: load_navae(paths[key])[0] for key in sorted(needed)}
    files = sorted(f for f in os.listdir(worlds_dir) if f.endswith(".json"))
    if not files:
        raise click.ClickException("no world files found")
    worlds = [(os.path.splitext(f)[0], load_world(os.path.join(worlds_dir, f))) for f in files]
    ex, filt, sel, table = _episode_configs(_load_config(config_path))
    report = run_suite(worlds, models, default_variants(ex, names), repeats, seed, out, sel, filt, table,
                       write_svg=not no_svg,
                       checkpoints={k: os.path.basename(paths[k]) for k in sorted(needed)})
    for row in report["summary"]:
        click.echo(json.dumps(row, sort_keys=True))


if __name__ == "__main__":  # pragma: no cover
    main()
