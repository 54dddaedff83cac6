from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ibis.errors import DimensionError
from ibis.nn.autograd import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params, grads, state: AdamState) -> AdamState:
    """Bias-corrected Adam update applied in place to the parameter arrays.

    ``params`` holds numpy arrays (or Tensors, whose ``data`` is updated);
    a ``None`` gradient is treated as zero.
    """
    arrays = [p.data if isinstance(p, Tensor) else p for p in params]
    if not state.m:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    if len(state.m) != len(arrays):
        raise DimensionError("Adam state was initialised for a different parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if m.shape != a.shape:
            raise DimensionError(f"moment shape {m.shape} does not match parameter {a.shape}")
        if g is None:
            g = np.zeros_like(a)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        a -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state
