"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps an ``ndarray`` and, when gradient tracking is on,
records the closure that propagates its adjoint to its parents. Calling
:meth:`Tensor.backward` orders the recorded graph topologically, replays
the adjoints in reverse, then releases the graph so a second backward on
the same result raises instead of silently double counting.

Broadcasting follows numpy's trailing-dimension alignment; incompatible
shapes raise :class:`ShapeError` naming both operands.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    """An operation produced inf/nan from finite inputs (e.g. log of 0)."""


class GraphReleasedError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled():
    return _GRAD_ENABLED


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


def _check_finite(out, op, *inputs):
    if not np.all(np.isfinite(out)) and all(np.all(np.isfinite(x.data)) for x in inputs):
        raise NonFiniteError(f"{op} produced a non-finite value from finite inputs")


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_released")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = None
        self._op = _op
        self._released = False

    # -- bookkeeping -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    @staticmethod
    def _make(data, parents, backward, op):
        out = Tensor(data, _op=op)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def backward(self, grad=None):
        if self._released:
            raise GraphReleasedError("backward already ran on this graph; run a new forward pass first")
        if not self.requires_grad:
            raise RuntimeError("tensor does not require grad")
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward needs an explicit gradient for non-scalar shape {self.shape}")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node._released = True
                node.grad = None if node is not self else node.grad

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self, other, "add")
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), bw, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self, other, "sub")
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))

        return Tensor._make(a.data - b.data, (a, b), bw, "sub")

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self, other, "mul")
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), bw, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self, other, "div")
        a, b = self, other
        out = a.data / b.data

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * out / b.data, b.shape))

        return Tensor._make(out, (a, b), bw, "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        a = self

        def bw(g):
            a._accumulate(-g)

        return Tensor._make(-a.data, (a,), bw, "neg")

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a = self
        out = a.data**exponent
        _check_finite(out, "pow", a)

        def bw(g):
            a._accumulate(g * exponent * a.data ** (exponent - 1))

        return Tensor._make(out, (a,), bw, "pow")

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        a = self
        out = a.data[idx]
        fancy = _is_fancy(idx)

        def bw(g):
            full = np.zeros_like(a.data)
            if fancy:
                np.add.at(full, idx, g)
            else:
                full[idx] += g
            a._accumulate(full)

        return Tensor._make(out, (a,), bw, "getitem")

    # -- shape ops -------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            out = a.data.reshape(shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {a.shape} to {shape}") from None

        def bw(g):
            a._accumulate(g.reshape(a.shape))

        return Tensor._make(out, (a,), bw, "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        a = self

        def bw(g):
            a._accumulate(np.transpose(g, inv))

        return Tensor._make(np.transpose(a.data, axes), (a,), bw, "transpose")

    @property
    def T(self):
        return self.transpose()

    def sum(self, axis=None, keepdims=False):
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def max(self, axis=None, keepdims=False):
        """Maximum along ``axis``; the adjoint goes to the first maximiser."""
        a = self
        if axis is None:
            flat_idx = int(np.argmax(a.data))

            def bw(g):
                full = np.zeros(a.size)
                full[flat_idx] = float(np.asarray(g).reshape(()))
                a._accumulate(full.reshape(a.shape))

            out = a.data.reshape(-1)[flat_idx]
            if keepdims:
                out = np.reshape(out, (1,) * a.ndim)
            return Tensor._make(out, (a,), bw, "max")
        ax = axis % a.ndim
        arg = np.expand_dims(np.argmax(a.data, axis=ax), ax)
        out = np.take_along_axis(a.data, arg, axis=ax)

        def bw(g):
            if not keepdims:
                g = np.expand_dims(g, ax)
            full = np.zeros_like(a.data)
            np.put_along_axis(full, arg, g, axis=ax)
            a._accumulate(full)

        return Tensor._make(out if keepdims else np.squeeze(out, ax), (a,), bw, "max")

    # -- pointwise -------------------------------------------------------

    def tanh(self):
        a = self
        out = np.tanh(a.data)

        def bw(g):
            a._accumulate(g * (1.0 - out * out))

        return Tensor._make(out, (a,), bw, "tanh")

    def sigmoid(self):
        a = self
        out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

        def bw(g):
            a._accumulate(g * out * (1.0 - out))

        return Tensor._make(out, (a,), bw, "sigmoid")

    def relu(self):
        a = self
        mask = a.data > 0

        def bw(g):
            a._accumulate(g * mask)

        return Tensor._make(a.data * mask, (a,), bw, "relu")

    def exp(self):
        a = self
        with np.errstate(over="ignore"):
            out = np.exp(a.data)
        _check_finite(out, "exp", a)

        def bw(g):
            a._accumulate(g * out)

        return Tensor._make(out, (a,), bw, "exp")

    def log(self):
        a = self
        if np.any(a.data <= 0):
            raise NonFiniteError(f"log of non-positive value (min {a.data.min():.3g})")
        out = np.log(a.data)

        def bw(g):
            a._accumulate(g / a.data)

        return Tensor._make(out, (a,), bw, "log")

    def softplus(self):
        a = self
        out = np.logaddexp(0.0, a.data)

        def bw(g):
            a._accumulate(g * 0.5 * (1.0 + np.tanh(0.5 * a.data)))

        return Tensor._make(out, (a,), bw, "softplus")

    def sqrt(self):
        a = self
        if np.any(a.data < 0):
            raise NonFiniteError("sqrt of negative value")
        out = np.sqrt(a.data)

        def bw(g):
            a._accumulate(g * 0.5 / out)

        return Tensor._make(out, (a,), bw, "sqrt")

    def square(self):
        a = self

        def bw(g):
            a._accumulate(2.0 * g * a.data)

        return Tensor._make(a.data * a.data, (a,), bw, "square")

    def clamp(self, lo=None, hi=None):
        """Clip to [lo, hi]; zero adjoint where clipped."""
        a = self
        out = np.clip(a.data, lo, hi)
        mask = out == a.data

        def bw(g):
            a._accumulate(g * mask)

        return Tensor._make(out, (a,), bw, "clamp")


def _is_fancy(idx):
    if isinstance(idx, (np.ndarray, list)):
        return True
    if isinstance(idx, tuple):
        return any(isinstance(i, (np.ndarray, list)) for i in idx)
    return False


def matmul(a, b):
    """Matrix product over the last two axes with batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul batch dimensions disagree: {a.shape} @ {b.shape}") from None

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor._make(out, (a, b), bw, "matmul")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._make(out, tuple(tensors), bw, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return Tensor._make(out, tuple(tensors), bw, "stack")


def tanh(x):
    return as_tensor(x).tanh()


def sigmoid(x):
    return as_tensor(x).sigmoid()


def relu(x):
    return as_tensor(x).relu()


def exp(x):
    return as_tensor(x).exp()


def log(x):
    return as_tensor(x).log()


def softplus(x):
    return as_tensor(x).softplus()


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "exp": exp, "log": log, "softplus": softplus}
_BINARY = {"add": lambda a, b: as_tensor(a) + b, "mul": lambda a, b: as_tensor(a) * b}


def elementwise(op, *operands):
    """Dispatch one of add, mul, tanh, sigmoid, relu, exp, log, softplus by name."""
    if op in _UNARY:
        (x,) = operands
        return _UNARY[op](x)
    if op in _BINARY:
        a, b = operands
        return _BINARY[op](a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


LOG_2PI = math.log(2.0 * math.pi)
