"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tensor


def numerical_grad(fn, arrays, index, eps=1e-6):
    """d fn(*arrays) / d arrays[index] by central differences; ``fn`` returns a float."""
    base = [np.array(a, dtype=np.float64, copy=True) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = target[i]
        target[i] = orig + eps
        fp = fn(*base)
        target[i] = orig - eps
        fm = fn(*base)
        target[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def analytic_grads(build, arrays):
    """Run ``build(*tensors)`` (returning a scalar Tensor) and backpropagate."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def max_gradcheck_error(build, arrays, eps=1e-6, floor=1e-4):
    """Largest relative error between analytic and numeric gradients over all inputs.

    The error of each entry is |a - n| / max(|a|, |n|, floor) so entries whose
    true gradient is ~0 do not blow up the ratio.
    """

    def scalar(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    grads = analytic_grads(build, arrays)
    worst = 0.0
    for k in range(len(arrays)):
        num = numerical_grad(scalar, arrays, k, eps=eps)
        worst = max(worst, relative_error(grads[k], num, floor=floor))
    return worst
