import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fixed_candidates, straight_candidate
from semnav.evaluation import (
    aggregate,
    compute_ept,
    compute_ntr,
    compute_spl,
    default_variants,
    episode_metrics,
    episode_svg,
    parse_svg_path,
    run_suite,
    spl_term,
)
from semnav.executive import ExecutiveConfig, count_non_traversable, run_episode
from semnav.selector import ClassCostTable
from semnav.sim.scenarios import flat_world, grass_shortcut_world
from semnav.sim.world import ClassRegistry, world_from_layers


def test_spl_examples():
    assert spl_term(True, 10.0, 10.0) == 1.0
    assert spl_term(True, 10.0, 20.0) == 0.5
    assert spl_term(False, 10.0, 10.0) == 0.0
    assert spl_term(True, 10.0, 5.0) == 1.0  # shorter than reference is capped
    with pytest.raises(ValueError):
        compute_spl([])


def test_spl_matches_direct_summation():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        eps = [(bool(rng.integers(0, 2)), float(rng.uniform(0.1, 30)), float(rng.uniform(0.1, 60))) for _ in range(n)]
        direct = sum(s * d / max(p, d) for s, d, p in eps) / n
        assert compute_spl(eps) == pytest.approx(direct, abs=1e-12)


def two_class_world():
    reg = ClassRegistry()
    g = np.full((10, 20), reg.id("pavement"), dtype=np.int64)
    g[:, 10:] = reg.id("grass")  # x >= 10 m at 1 m cells
    g[0, 0] = reg.id("wall")
    return world_from_layers(g, reg, 1.0, start=(1.5, 5.5), goal=(18.5, 5.5))


def test_ept_examples():
    w = two_class_world()
    pav = np.c_[np.linspace(0.5, 9.5, 10), np.full(10, 5.5)]
    assert compute_ept(pav, w) == 100.0
    half = np.c_[np.linspace(0.5, 19.5, 20), np.full(20, 5.5)]
    assert compute_ept(half, w, mode="strict") == 50.0
    assert compute_ept(half, w, mode="soft") == 100.0  # grass cost 2 <= T_occ
    assert compute_ept(half, w, ClassCostTable().with_cost("grass", 3.0), mode="soft") == 50.0
    assert compute_ept([[0.5, 0.5]], w) == 0.0  # wall sample
    with pytest.raises(ValueError):
        compute_ept(pav, w, mode="other")


def test_ntr_examples():
    assert compute_ntr(0, 10) == 0.0
    assert compute_ntr(3, 12) == 25.0
    with pytest.raises(ValueError):
        compute_ntr(0, 0)
    w = two_class_world()
    pts = np.array([[1.5, 5.5]] * 9 + [[12.5, 5.5], [15.5, 2.5], [0.5, 0.5]])
    assert count_non_traversable(w, pts) == 3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_ept_counts_every_sample_once(seed):
    w = two_class_world()
    rng = np.random.default_rng(seed)
    pts = rng.uniform([0, 0], [20, 10], size=(int(rng.integers(1, 40)), 2))
    pav = sum(w.class_at(x, y) == w.registry.id("pavement") for x, y in pts)
    grass = sum(w.class_at(x, y) == w.registry.id("grass") for x, y in pts)
    assert compute_ept(pts, w, mode="strict") == pytest.approx(100.0 * pav / len(pts))
    assert compute_ept(pts, w, mode="soft") == pytest.approx(100.0 * (pav + grass) / len(pts))


def flat_log():
    w = flat_world()
    cfg = ExecutiveConfig(camera_width=160, camera_height=120)
    return w, run_episode(w, None, cfg, timeout=40.0, candidate_fn=fixed_candidates(straight_candidate()))


def test_episode_metrics_and_aggregate():
    w, log = flat_log()
    m = episode_metrics(log, w, 25.0, 20.0, world_name="flat", variant="full")
    assert m.success and 0.0 < m.spl <= 1.0 and m.t_ratio > 0
    assert m.ept_strict == m.ept_soft == 100.0
    assert m.ntr == 0.0 and m.ntr_total == 12 * log.summary["generation"]
    agg = aggregate([m, m])
    assert agg["sr"] == 100.0 and agg["spl"] == pytest.approx(m.spl) and agg["episodes"] == 2


def test_svg_path_matches_logged_states():
    w, log = flat_log()
    svg = episode_svg(w, log)
    assert svg.startswith("<svg") and 'id="goal"' in svg
    np.testing.assert_array_equal(parse_svg_path(svg), log.states()[:, 1:3])
    assert svg.count('class="plan"') == len(log.of_type("adopt"))


def test_default_variants():
    vs = {v.name: v for v in default_variants()}
    assert vs["fixf"].model_key == "full" and vs["fixf"].exec_cfg.force_switch
    assert vs["full"].exec_cfg.epsilon == ExecutiveConfig().epsilon
    with pytest.raises(ValueError):
        default_variants(names=("nope",))


def test_missing_checkpoint_rejected_before_running(tmp_path):
    with pytest.raises(ValueError, match="basel"):
        run_suite([("flat", flat_world())], {"full": None}, default_variants(names=("full", "basel")),
                  out_dir=tmp_path / "out")
    assert not (tmp_path / "out").exists()
