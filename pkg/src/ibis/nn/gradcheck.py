"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from ibis.nn.autograd import Tensor, backward, tape_scope


def numerical_grad(fn, tensors: list[Tensor], step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of the scalar ``fn()`` with respect to each tensor's data."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat, gflat = t.data.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = fn().item()
            flat[k] = orig - step
            down = fn().item()
            flat[k] = orig
            gflat[k] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def analytic_grad(fn, tensors: list[Tensor]) -> list[np.ndarray]:
    for t in tensors:
        t.grad = None
    with tape_scope():
        loss = fn()
        backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a-b| / max(|a|, |b|, floor), elementwise."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_gradients(fn, tensors: list[Tensor], step: float = 1e-5) -> float:
    """Worst relative error between tape and finite-difference gradients."""
    ana = analytic_grad(fn, tensors)
    num = numerical_grad(fn, tensors, step)
    return max(max_relative_error(a, n) for a, n in zip(ana, num))
