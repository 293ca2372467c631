"""Composite and fused differentiable operations used by the models."""

from __future__ import annotations

import numpy as np

from .tensor import (
    LOG_2PI,
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    matmul,
)

LAYER_NORM_EPS = 1e-5


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    if n < 2:
        raise ShapeError(f"layer_norm needs a last dimension >= 2, got {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = xhat * gain.data + bias.data

    def bw(g):
        if x.requires_grad:
            dxhat = g * gain.data
            dx = inv_std / n * (
                n * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
            x._accumulate(dx)
        lead = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=lead).reshape(gain.shape))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=lead).reshape(bias.shape))

    return Tensor._make(out, (x, gain, bias), bw, "layer_norm")


def logsumexp(x, axis=-1, keepdims=False):
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise ShapeError("logsumexp over an empty axis")
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(g * soft)

    return Tensor._make(out if keepdims else np.squeeze(out, axis), (x,), bw, "logsumexp")


def log_softmax(x, axis=-1):
    return x - logsumexp(x, axis=axis, keepdims=True)


def weighted_cross_entropy(logits, labels, class_weights, mask=None):
    """Weighted mean cross-entropy. ``labels`` are integer class ids.

    The mean is normalised by the summed weights of the contributing
    samples, so perfect predictions give ~0 regardless of weighting.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    w = np.asarray(class_weights, dtype=np.float64)[labels]
    if mask is not None:
        w = w * np.asarray(mask, dtype=np.float64)
    logp = log_softmax(logits, axis=-1)
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    picked = (logp * onehot).sum(axis=-1)
    denom = max(float(w.sum()), 1e-12)
    return -(picked * w).sum() * (1.0 / denom)


def gaussian_nll(mean, log_var, target, axis=None):
    """Negative log density of ``target`` under N(mean, diag(exp(log_var))).

    Summed over ``axis`` (all axes when None).
    """
    mean, log_var, target = as_tensor(mean), as_tensor(log_var), as_tensor(target)
    if not (mean.shape == log_var.shape == target.shape):
        raise ShapeError(f"gaussian_nll shapes differ: {mean.shape}, {log_var.shape}, {target.shape}")
    diff = target - mean
    per = (diff.square() * (-log_var).exp() + log_var + LOG_2PI) * 0.5
    return per.sum(axis=axis)


def diag_gaussian_kl(p_mean, p_log_var, q_mean, q_log_var, axis=-1):
    """KL(p || q) between diagonal Gaussians, summed over ``axis``."""
    p_mean, p_log_var = as_tensor(p_mean), as_tensor(p_log_var)
    q_mean, q_log_var = as_tensor(q_mean), as_tensor(q_log_var)
    if p_mean.shape != q_mean.shape:
        raise ShapeError(f"KL dimension mismatch: {p_mean.shape} vs {q_mean.shape}")
    ratio = (p_log_var - q_log_var).exp()
    term = ratio + (p_mean - q_mean).square() * (-q_log_var).exp() - (p_log_var - q_log_var) - 1.0
    return term.sum(axis=axis) * 0.5


def lstm_cell(x, h, c, w_ih, w_hh, b):
    """One LSTM step. Gate order in the packed weights: input, forget, cell, output."""
    gates = matmul(x, w_ih) + matmul(h, w_hh) + b
    hidden = h.shape[-1]
    if gates.shape[-1] != 4 * hidden:
        raise ShapeError(f"LSTM gate width {gates.shape[-1]} != 4 x hidden {hidden}")
    i = gates[..., 0 * hidden:1 * hidden].sigmoid()
    f = gates[..., 1 * hidden:2 * hidden].sigmoid()
    g = gates[..., 2 * hidden:3 * hidden].tanh()
    o = gates[..., 3 * hidden:4 * hidden].sigmoid()
    c_new = f * c + i * g
    h_new = o * c_new.tanh()
    return h_new, c_new


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step. Gate order: reset, update, candidate."""
    hidden = h.shape[-1]
    if w_hh.shape[-1] != 3 * hidden:
        raise ShapeError(f"GRU gate width {w_hh.shape[-1]} != 3 x hidden {hidden}")
    gi = matmul(x, w_ih) + b_ih
    gh = matmul(h, w_hh) + b_hh
    r = (gi[..., :hidden] + gh[..., :hidden]).sigmoid()
    z = (gi[..., hidden:2 * hidden] + gh[..., hidden:2 * hidden]).sigmoid()
    n = (gi[..., 2 * hidden:] + r * gh[..., 2 * hidden:]).tanh()
    return (1.0 - z) * n + z * h


def lstm_sequence(xs, h0, c0, w_ih, w_hh, b, reverse=False):
    """Unroll an LSTM over ``xs`` of shape (batch, time, features)."""
    xs = as_tensor(xs)
    steps = xs.shape[1]
    if steps == 0:
        raise ShapeError("LSTM over an empty sequence")
    h, c = h0, c0
    outputs = []
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h, c = lstm_cell(xs[:, t, :], h, c, w_ih, w_hh, b)
        outputs.append(h)
    if reverse:
        outputs.reverse()
    return outputs, (h, c)


def bilstm_sequence(xs, fwd_params, bwd_params, hidden):
    """Bidirectional LSTM; returns the concatenated final forward/backward states."""
    xs = as_tensor(xs)
    batch = xs.shape[0]
    zeros = Tensor(np.zeros((batch, hidden)))
    _, (hf, _) = lstm_sequence(xs, zeros, zeros, *fwd_params)
    _, (hb, _) = lstm_sequence(xs, zeros, zeros, *bwd_params, reverse=True)
    return concat([hf, hb], axis=-1)


def _im2col(xp, kh, kw, stride, ho, wo):
    b, c = xp.shape[:2]
    cols = np.empty((b, c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(b, c * kh * kw, ho * wo)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation. ``x`` (B, C, H, W), ``weight`` (O, C, kh, kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    b, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if cw != c:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernel {weight.shape}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"conv2d kernel {weight.shape[2:]} larger than input {x.shape[2:]}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wmat = weight.data.reshape(o, -1)
    out = (wmat @ cols).reshape(b, o, ho, wo)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, o, 1, 1)
        parents.append(bias)

    def bw(g):
        gm = g.reshape(b, o, ho * wo)
        if weight.requires_grad:
            weight._accumulate(np.einsum("bop,bkp->ok", gm, cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (wmat.T @ gm).reshape(b, c, kh, kw, ho, wo)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, i, j]
            if padding:
                dxp = dxp[:, :, padding:padding + h, padding:padding + w]
            x._accumulate(dxp)

    return Tensor._make(out, tuple(parents), bw, "conv2d")


def maxpool_points(features, axis=-2):
    """Symmetric max-pool over the point axis (PointNet global feature)."""
    return as_tensor(features).max(axis=axis)


def bilinear_sample(grid, points):
    """Bilinearly interpolate ``grid`` at continuous ``points``.

    ``grid`` is (H, W) or (B, H, W); ``points`` is (..., 2) holding
    (col, row) coordinates in cell units with cell centres at integers,
    batched as (B, P, 2) when the grid is batched. Queries are clamped to
    the grid; clamped coordinates receive zero gradient.
    """
    grid, points = as_tensor(grid), as_tensor(points)
    batched = grid.ndim == 3
    g = grid.data if batched else grid.data[None]
    p = points.data if batched else points.data[None]
    _, H, W = g.shape
    if H < 2 or W < 2:
        raise ShapeError(f"bilinear_sample needs a grid of at least 2x2, got {grid.shape}")
    bidx = np.arange(g.shape[0]).reshape((-1,) + (1,) * (p.ndim - 2))
    x = np.clip(p[..., 0], 0.0, W - 1.0)
    y = np.clip(p[..., 1], 0.0, H - 1.0)
    inside_x = (p[..., 0] >= 0.0) & (p[..., 0] <= W - 1.0)
    inside_y = (p[..., 1] >= 0.0) & (p[..., 1] <= H - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), W - 2)
    y0 = np.minimum(np.floor(y).astype(np.int64), H - 2)
    fx = x - x0
    fy = y - y0
    g00 = g[bidx, y0, x0]
    g01 = g[bidx, y0, x0 + 1]
    g10 = g[bidx, y0 + 1, x0]
    g11 = g[bidx, y0 + 1, x0 + 1]
    out = (1 - fx) * (1 - fy) * g00 + fx * (1 - fy) * g01 + (1 - fx) * fy * g10 + fx * fy * g11
    if not batched:
        out = out[0]

    def bw(gr):
        gb = gr if batched else gr[None]
        if points.requires_grad:
            dx = ((1 - fy) * (g01 - g00) + fy * (g11 - g10)) * inside_x
            dy = ((1 - fx) * (g10 - g00) + fx * (g11 - g01)) * inside_y
            dp = np.stack([gb * dx, gb * dy], axis=-1)
            points._accumulate(dp if batched else dp[0])
        if grid.requires_grad:
            dg = np.zeros_like(g)
            np.add.at(dg, (bidx, y0, x0), gb * (1 - fx) * (1 - fy))
            np.add.at(dg, (bidx, y0, x0 + 1), gb * fx * (1 - fy))
            np.add.at(dg, (bidx, y0 + 1, x0), gb * (1 - fx) * fy)
            np.add.at(dg, (bidx, y0 + 1, x0 + 1), gb * fx * fy)
            grid._accumulate(dg if batched else dg[0])

    return Tensor._make(out, (grid, points), bw, "bilinear_sample")
