import json

import pytest
from click.testing import CliRunner

from semnav.cli import main

SMALL = {
    "train": {"epochs": 1, "batch_size": 16},
    "model": {"feature_size": 8, "latent_size": 4, "decoder_hidden": 8},
    "executive": {"camera_width": 160, "camera_height": 120, "K": 8, "min_timeout": 6.0, "timeout_factor": 0.1},
}


def invoke(*args):
    res = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    assert res.exit_code == 0, res.output
    return res.output


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps(SMALL))
    invoke("gen-world", "--seed", 1, "--out", d / "worlds" / "w1.json")
    invoke("gen-dataset", "--world", d / "worlds" / "w1.json", "--runs", 1, "--out", d / "data")
    invoke("train-seg", "--data", d / "data", "--epochs", 1, "--out", d / "seg.pkl")
    invoke("train-navae", "--data", d / "data", "--seg", d / "seg.pkl", "--config", d / "cfg.json",
           "--out", d / "m.npz", "--curves", d / "curves.csv")
    return d


def test_pipeline_artifacts(pipeline):
    d = pipeline
    manifest = json.loads((d / "data" / "manifest.json").read_text())
    assert manifest["count"] > 0
    assert (d / "m.npz").exists() and (d / "curves.csv").read_text().startswith("epoch")


def test_sample_and_episode(pipeline):
    d = pipeline
    invoke("sample", "--world", d / "worlds" / "w1.json", "--ckpt", d / "m.npz", "--k", 5, "--out", d / "s.json")
    assert len(json.loads((d / "s.json").read_text())["trajectories"]) == 5
    out = invoke("run-episode", "--world", d / "worlds" / "w1.json", "--ckpt", d / "m.npz",
                 "--config", d / "cfg.json", "--out", d / "ep.jsonl")
    summary = json.loads(out)
    assert summary["status"] in ("success", "timeout", "collision")
    assert (d / "ep.jsonl").read_text().count("\n") > 10


def test_eval_suite_outputs_and_determinism(pipeline):
    d = pipeline
    args = ["--worlds", d / "worlds", "--ckpt", d / "m.npz", "--variants", "full,fixf", "--repeats", 1,
            "--config", d / "cfg.json"]
    invoke("eval-suite", *args, "--out", d / "e1")
    invoke("eval-suite", *args, "--out", d / "e2")
    for name in ("summary.csv", "episodes.csv", "logs/full_w1_0.jsonl", "logs/fixf_w1_0.jsonl"):
        assert (d / "e1" / name).read_bytes() == (d / "e2" / name).read_bytes()
    rows = (d / "e1" / "summary.csv").read_text().splitlines()
    assert rows[0].startswith("#") and rows[1].startswith("variant,") and len(rows) == 4
    assert len(list((d / "e1" / "svg").iterdir())) == 2


def test_eval_suite_rejects_missing_checkpoint(pipeline, tmp_path):
    d = pipeline
    res = CliRunner().invoke(main, ["eval-suite", "--worlds", str(d / "worlds"), "--ckpt", str(d / "m.npz"),
                                    "--variants", "basel", "--out", str(tmp_path / "o")])
    assert res.exit_code != 0 and "ckpt-basel" in res.output
    res = CliRunner().invoke(main, ["eval-suite", "--worlds", str(d / "worlds"), "--ckpt", str(tmp_path / "no.npz"),
                                    "--variants", "full", "--out", str(tmp_path / "o")])
    assert res.exit_code != 0 and "not found" in res.output
    assert not (tmp_path / "o").exists()
