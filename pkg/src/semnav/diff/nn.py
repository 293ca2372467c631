"""Parameter containers and layers built on the tensor engine."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor, concat, matmul


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def parameter(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class Module:
    """Minimal module: parameters are Tensor attributes, submodules are Module
    attributes (or lists of them). Names follow attribute paths."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        params = dict(self.named_parameters())
        missing = [k for k in params if k not in state]
        if strict and missing:
            raise KeyError(f"missing parameters: {missing[:5]}")
        for name, p in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {value.shape} != model shape {p.shape}")
            p.data = value.copy()

    def set_requires_grad(self, flag):
        for p in self.parameters():
            p.requires_grad = flag


class Linear(Module):
    def __init__(self, in_features, out_features, rng):
        self.weight = parameter(_glorot(rng, in_features, out_features, (in_features, out_features)))
        self.bias = parameter(np.zeros(out_features))

    def __call__(self, x):
        return matmul(x, self.weight) + self.bias


class MLP(Module):
    def __init__(self, sizes, rng, final_activation=False):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self._final_activation = final_activation

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self._final_activation:
                x = x.relu()
        return x


class LayerNorm(Module):
    def __init__(self, size):
        self.gain = parameter(np.ones(size))
        self.bias = parameter(np.zeros(size))

    def __call__(self, x):
        return F.layer_norm(x, self.gain, self.bias)


class LSTM(Module):
    """Single-layer LSTM over (batch, time, features)."""

    def __init__(self, input_size, hidden_size, rng):
        self.hidden_size = hidden_size
        self.w_ih = parameter(_glorot(rng, input_size, 4 * hidden_size, (input_size, 4 * hidden_size)))
        self.w_hh = parameter(_glorot(rng, hidden_size, 4 * hidden_size, (hidden_size, 4 * hidden_size)))
        b = np.zeros(4 * hidden_size)
        b[hidden_size:2 * hidden_size] = 1.0  # forget-gate bias
        self.b = parameter(b)

    def params(self):
        return self.w_ih, self.w_hh, self.b

    def __call__(self, xs, reverse=False):
        zeros = Tensor(np.zeros((xs.shape[0], self.hidden_size)))
        outputs, (h, c) = F.lstm_sequence(xs, zeros, zeros, *self.params(), reverse=reverse)
        return outputs, (h, c)


class BiLSTM(Module):
    def __init__(self, input_size, hidden_size, rng):
        self.hidden_size = hidden_size
        self.fwd = LSTM(input_size, hidden_size, rng)
        self.bwd = LSTM(input_size, hidden_size, rng)

    def __call__(self, xs):
        return F.bilstm_sequence(xs, self.fwd.params(), self.bwd.params(), self.hidden_size)


class GRUCell(Module):
    def __init__(self, input_size, hidden_size, rng):
        self.hidden_size = hidden_size
        self.w_ih = parameter(_glorot(rng, input_size, 3 * hidden_size, (input_size, 3 * hidden_size)))
        self.w_hh = parameter(_glorot(rng, hidden_size, 3 * hidden_size, (hidden_size, 3 * hidden_size)))
        self.b_ih = parameter(np.zeros(3 * hidden_size))
        self.b_hh = parameter(np.zeros(3 * hidden_size))

    def __call__(self, x, h):
        return F.gru_cell(x, h, self.w_ih, self.w_hh, self.b_ih, self.b_hh)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=1, padding=0):
        fan_in = in_channels * kernel_size * kernel_size
        fan_out = out_channels * kernel_size * kernel_size
        self.weight = parameter(
            _glorot(rng, fan_in, fan_out, (out_channels, in_channels, kernel_size, kernel_size))
        )
        self.bias = parameter(np.zeros(out_channels))
        self._stride = stride
        self._padding = padding

    def __call__(self, x):
        return F.conv2d(x, self.weight, self.bias, stride=self._stride, padding=self._padding)


__all__ = ["Module", "Linear", "MLP", "LayerNorm", "LSTM", "BiLSTM", "GRUCell", "Conv2d", "parameter", "concat"]
