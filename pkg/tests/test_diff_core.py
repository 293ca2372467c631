import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semnav.diff import (
    AdamW,
    ExponentialLR,
    GraphReleasedError,
    NonFiniteError,
    ShapeError,
    Tensor,
    bilinear_sample,
    conv2d,
    diag_gaussian_kl,
    elementwise,
    gaussian_nll,
    gru_cell,
    layer_norm,
    load_checkpoint,
    logsumexp,
    lstm_cell,
    matmul,
    maxpool_points,
    save_checkpoint,
    weighted_cross_entropy,
)
from semnav.diff.checkpoint import CheckpointError, deserialize_checkpoint, serialize_checkpoint
from semnav.diff.functional import bilstm_sequence
from semnav.diff.gradcheck import max_gradcheck_error

N_SHAPES = 20


def rand_shapes(rng, n=N_SHAPES, ndim=2, lo=1, hi=5):
    return [tuple(int(s) for s in rng.integers(lo, hi + 1, size=ndim)) for _ in range(n)]


# ---------------------------------------------------------------- matmul


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_hand_arithmetic():
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_mismatch_reports_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_sum_gradient_is_b_transpose_broadcast():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    ta = Tensor(a, requires_grad=True)
    matmul(ta, Tensor(b)).sum().backward()
    np.testing.assert_allclose(ta.grad, np.broadcast_to(b.sum(axis=1), (3, 4)))
    err = max_gradcheck_error(lambda x, y: matmul(x, y).sum(), [a, b])
    assert err <= 1e-6


def test_matmul_gradcheck_random_shapes():
    rng = np.random.default_rng(1)
    for m, k in rand_shapes(rng):
        n = int(rng.integers(1, 5))
        a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
        w = rng.normal(size=(m, n))
        assert max_gradcheck_error(lambda x, y: (matmul(x, y) * Tensor(w)).sum(), [a, b]) <= 1e-5


# ---------------------------------------------------------------- elementwise


def test_elementwise_closed_forms():
    assert elementwise("tanh", Tensor(0.0)).item() == 0.0
    assert elementwise("softplus", Tensor(0.0)).item() == pytest.approx(math.log(2), abs=1e-12)
    x = Tensor(0.0, requires_grad=True)
    elementwise("sigmoid", x).backward()
    assert x.grad == pytest.approx(0.25)


@pytest.mark.parametrize("op", ["tanh", "sigmoid", "exp", "softplus", "log", "relu"])
def test_unary_gradcheck_random_shapes(op):
    rng = np.random.default_rng(zlib.crc32(op.encode()))
    for shape in rand_shapes(rng):
        x = rng.normal(size=shape)
        if op == "log":
            x = np.abs(x) + 0.5
        if op == "relu":
            x = np.where(np.abs(x) < 0.05, 0.3, x)  # stay off the kink
        w = rng.normal(size=shape)
        err = max_gradcheck_error(lambda t: (elementwise(op, t) * Tensor(w)).sum(), [x])
        assert err <= 1e-5, (op, shape, err)


@pytest.mark.parametrize("op", ["add", "mul"])
def test_binary_broadcast_gradcheck(op):
    rng = np.random.default_rng(7)
    for shape in rand_shapes(rng, ndim=3):
        other = (1,) + shape[1:] if rng.random() < 0.5 else shape[-1:]
        a, b = rng.normal(size=shape), rng.normal(size=other)
        w = rng.normal(size=shape)
        err = max_gradcheck_error(lambda x, y: (elementwise(op, x, y) * Tensor(w)).sum(), [a, b])
        assert err <= 1e-5


def test_broadcast_rejects_misaligned_shapes():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((2,)))


def test_log_domain_violation_is_flagged():
    with pytest.raises(NonFiniteError):
        elementwise("log", Tensor([1.0, 0.0]))
    with pytest.raises(NonFiniteError):
        elementwise("exp", Tensor([1000.0]))


# ---------------------------------------------------------------- layer norm


def test_layer_norm_constant_input_is_zero():
    out = layer_norm(Tensor(np.full((2, 4), 3.0)), Tensor(np.ones(4)), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.data, 0.0)


def test_layer_norm_two_values():
    out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-5)


def test_layer_norm_rejects_short_last_dim():
    with pytest.raises(ShapeError):
        layer_norm(Tensor(np.ones((3, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)))


def test_layer_norm_gradcheck_random_shapes():
    rng = np.random.default_rng(3)
    for b, d in rand_shapes(rng, lo=2, hi=6):
        x, g, bb = rng.normal(size=(b, d)), rng.normal(size=d), rng.normal(size=d)
        w = rng.normal(size=(b, d))
        assert max_gradcheck_error(lambda *t: (layer_norm(*t) * Tensor(w)).sum(), [x, g, bb]) <= 1e-5


# ---------------------------------------------------------------- recurrent cells


def test_gru_zero_everything_is_zero():
    h = gru_cell(
        Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 2))),
        Tensor(np.zeros((3, 6))), Tensor(np.zeros((2, 6))), Tensor(np.zeros(6)), Tensor(np.zeros(6)),
    )
    np.testing.assert_array_equal(h.data, 0.0)


def test_lstm_zero_params_single_step():
    h, c = lstm_cell(
        Tensor(np.ones((1, 3))), Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 2))),
        Tensor(np.zeros((3, 8))), Tensor(np.zeros((2, 8))), Tensor(np.zeros(8)),
    )
    np.testing.assert_array_equal(h.data, 0.0)
    np.testing.assert_array_equal(c.data, 0.0)


def test_recurrent_gradcheck_random_shapes():
    rng = np.random.default_rng(4)
    for b, i in rand_shapes(rng, hi=4):
        hdim = int(rng.integers(1, 4))
        x = rng.normal(size=(b, i))
        h = rng.normal(size=(b, hdim))
        c = rng.normal(size=(b, hdim))
        lw = [rng.normal(size=(i, 4 * hdim)) * 0.5, rng.normal(size=(hdim, 4 * hdim)) * 0.5, rng.normal(size=4 * hdim)]
        err = max_gradcheck_error(lambda *t: sum(o.sum() for o in lstm_cell(*t)), [x, h, c, *lw])
        assert err <= 1e-4
        gw = [rng.normal(size=(i, 3 * hdim)) * 0.5, rng.normal(size=(hdim, 3 * hdim)) * 0.5,
              rng.normal(size=3 * hdim), rng.normal(size=3 * hdim)]
        err = max_gradcheck_error(lambda *t: gru_cell(*t).sum(), [x, h, *gw])
        assert err <= 1e-4


def test_bilstm_gradcheck_and_empty_rejected():
    rng = np.random.default_rng(5)
    xs = rng.normal(size=(2, 3, 2))
    fw = [rng.normal(size=(2, 8)) * 0.5, rng.normal(size=(2, 8)) * 0.5, rng.normal(size=8)]
    bw = [rng.normal(size=(2, 8)) * 0.5, rng.normal(size=(2, 8)) * 0.5, rng.normal(size=8)]
    err = max_gradcheck_error(lambda x, *p: bilstm_sequence(x, p[:3], p[3:], 2).sum(), [xs, *fw, *bw])
    assert err <= 1e-4
    with pytest.raises(ShapeError):
        bilstm_sequence(Tensor(np.zeros((1, 0, 2))), [Tensor(a) for a in fw], [Tensor(a) for a in bw], 2)


# ---------------------------------------------------------------- densities


def test_gaussian_nll_closed_forms():
    half_log_2pi = 0.5 * math.log(2 * math.pi)
    assert gaussian_nll(Tensor([0.0]), Tensor([0.0]), Tensor([0.0])).item() == pytest.approx(half_log_2pi)
    assert gaussian_nll(Tensor([0.0]), Tensor([0.0]), Tensor([1.0])).item() == pytest.approx(0.5 + half_log_2pi)


def test_gaussian_nll_decreases_toward_target():
    vals = [gaussian_nll(Tensor([m]), Tensor([0.3]), Tensor([2.0])).item() for m in (-1.0, 0.0, 1.0, 1.5, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_kl_closed_forms_and_gibbs():
    z = Tensor(np.zeros(3))
    assert diag_gaussian_kl(z, z, z, z).item() == 0.0
    assert diag_gaussian_kl(Tensor([0.0]), Tensor([0.0]), Tensor([1.0]), Tensor([0.0])).item() == pytest.approx(0.5)
    rng = np.random.default_rng(6)
    for _ in range(1000):
        pm, pl, qm, ql = rng.normal(size=(4, 3))
        assert diag_gaussian_kl(Tensor(pm), Tensor(pl), Tensor(qm), Tensor(ql)).item() >= 0.0


def test_density_gradcheck_random_shapes():
    rng = np.random.default_rng(8)
    for shape in rand_shapes(rng):
        a, b, c, d = (rng.normal(size=shape) for _ in range(4))
        assert max_gradcheck_error(lambda *t: gaussian_nll(*t), [a, b, c]) <= 1e-5
        assert max_gradcheck_error(lambda *t: diag_gaussian_kl(*t).sum(), [a, b, c, d]) <= 1e-5


# ---------------------------------------------------------------- logsumexp


def test_logsumexp_values():
    assert logsumexp(Tensor([0.0, 0.0])).item() == pytest.approx(math.log(2))
    assert logsumexp(Tensor([1000.0, 1000.0])).item() == pytest.approx(1000 + math.log(2))
    assert logsumexp(Tensor([-3.5])).item() == -3.5


def test_logsumexp_gradcheck_random_shapes():
    rng = np.random.default_rng(9)
    for shape in rand_shapes(rng):
        x, w = rng.normal(size=shape), rng.normal(size=shape[:-1])
        assert max_gradcheck_error(lambda t: (logsumexp(t, axis=-1) * Tensor(w)).sum(), [x]) <= 1e-5


# ---------------------------------------------------------------- bilinear sampling


def test_bilinear_cell_centre_and_midpoint():
    grid = Tensor([[0.0, 2.0], [5.0, 7.0]])
    assert bilinear_sample(grid, Tensor([[1.0, 0.0]])).data[0] == 2.0
    assert bilinear_sample(grid, Tensor([[0.5, 0.0]])).data[0] == 1.0


def test_bilinear_clamps_with_zero_gradient():
    grid = Tensor(np.arange(9.0).reshape(3, 3))
    pts = Tensor([[-4.0, 1.2]], requires_grad=True)
    out = bilinear_sample(grid, pts)
    assert out.data[0] == pytest.approx(bilinear_sample(grid, Tensor([[0.0, 1.2]])).data[0])
    out.sum().backward()
    assert pts.grad[0, 0] == 0.0


def test_bilinear_gradcheck_random_shapes():
    rng = np.random.default_rng(10)
    for h, w in rand_shapes(rng, lo=2, hi=6):
        grid = rng.normal(size=(h, w))
        pts = np.stack([rng.uniform(0, w - 1, 5), rng.uniform(0, h - 1, 5)], axis=-1)
        # keep away from cell boundaries where the interpolant has kinks
        pts = np.floor(pts) + np.clip(pts - np.floor(pts), 0.1, 0.9)
        pts = np.minimum(pts, [w - 1.1, h - 1.1])
        assert max_gradcheck_error(lambda g, p: bilinear_sample(g, p).sum(), [grid, pts]) <= 1e-4


# ---------------------------------------------------------------- conv / pooling / optimiser


def test_conv_identity_kernel():
    x = np.random.default_rng(11).normal(size=(2, 3, 5, 4))
    k = np.eye(3).reshape(3, 3, 1, 1)
    np.testing.assert_allclose(conv2d(Tensor(x), Tensor(k)).data, x)


def test_conv_rejects_oversized_kernel():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


def test_conv_gradcheck_random_shapes():
    rng = np.random.default_rng(12)
    for _ in range(N_SHAPES):
        c, o, k = (int(v) for v in rng.integers(1, 3, size=3))
        k += 1
        h, w = (int(v) for v in rng.integers(k, k + 4, size=2))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        x, wt, b = rng.normal(size=(2, c, h, w)), rng.normal(size=(o, c, k, k)), rng.normal(size=o)
        probe = conv2d(Tensor(x), Tensor(wt), Tensor(b), stride=stride, padding=pad)
        wout = rng.normal(size=probe.shape)
        err = max_gradcheck_error(
            lambda *t: (conv2d(*t, stride=stride, padding=pad) * Tensor(wout)).sum(), [x, wt, b]
        )
        assert err <= 1e-5


def test_maxpool_permutation_invariant():
    rng = np.random.default_rng(13)
    feats = rng.normal(size=(30, 8))
    ref = maxpool_points(Tensor(feats), axis=0).data
    for _ in range(100):
        np.testing.assert_array_equal(maxpool_points(Tensor(feats[rng.permutation(30)]), axis=0).data, ref)


def test_maxpool_gradcheck_random_shapes():
    rng = np.random.default_rng(14)
    for shape in rand_shapes(rng, lo=2):
        x = rng.normal(size=shape)
        w = rng.normal(size=shape[1:])
        assert max_gradcheck_error(lambda t: (maxpool_points(t, axis=0) * Tensor(w)).sum(), [x]) <= 1e-5


def test_adamw_minimises_quadratic():
    w = Tensor([1.0], requires_grad=True)
    opt = AdamW([w], lr=0.05, weight_decay=0.0)
    for _ in range(500):
        opt.zero_grad()
        (w * w).sum().backward()
        opt.step()
    assert abs(w.data[0]) < 1e-3


def test_adamw_decoupled_decay_shrinks_without_gradient():
    w = Tensor([2.0], requires_grad=True)
    opt = AdamW([w], lr=0.1, weight_decay=0.5)
    opt.step()  # zero gradient: only the decay term acts
    assert w.data[0] == pytest.approx(2.0 * (1 - 0.05))


def test_exponential_schedule_every_ten_epochs():
    opt = AdamW([Tensor([0.0], requires_grad=True)], lr=1e-3)
    sched = ExponentialLR(opt, factor=0.5, every=10)
    assert [sched.step_epoch(e) for e in (0, 9, 10, 25)] == pytest.approx([1e-3, 1e-3, 5e-4, 2.5e-4])


def test_weighted_cross_entropy_perfect_predictions():
    logits = Tensor([[20.0, -20.0], [-20.0, 20.0]])
    assert weighted_cross_entropy(logits, [0, 1], [1 / 0.9, 1 / 0.1]).item() == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------- tape and determinism


def test_backward_twice_is_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = (x * x).sum()
    y.backward()
    with pytest.raises(GraphReleasedError):
        y.backward()


def test_tape_replay_is_bitwise_identical():
    rng = np.random.default_rng(15)
    a = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 5))

    def run():
        ta, tw = Tensor(a, requires_grad=True), Tensor(w, requires_grad=True)
        out = (matmul(ta, tw).tanh() * 1.5).sum() + logsumexp(matmul(ta, tw), axis=-1).sum()
        out.backward()
        return out.data, ta.grad, tw.grad

    r1, r2 = run(), run()
    for x, y in zip(r1, r2):
        assert x.tobytes() == y.tobytes()


def test_shared_subexpression_accumulates():
    x = Tensor([3.0], requires_grad=True)
    y = x * x
    z = (y * y + y).sum()  # x^4 + x^2
    z.backward()
    assert x.grad[0] == pytest.approx(4 * 27 + 6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_logsumexp_bounds(values):
    out = logsumexp(Tensor(values)).item()
    assert max(values) <= out <= max(values) + math.log(len(values)) + 1e-9


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(16)
    tensors = {"enc.w": rng.normal(size=(3, 4)), "b": rng.normal(size=5), "scalar": np.array(2.5)}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    for k, v in tensors.items():
        assert loaded[k].tobytes() == v.astype("<f4").tobytes()
    assert serialize_checkpoint(loaded) == path.read_bytes()


def test_checkpoint_bad_magic():
    with pytest.raises(CheckpointError):
        deserialize_checkpoint(b"XXXX" + b"\0" * 10)
