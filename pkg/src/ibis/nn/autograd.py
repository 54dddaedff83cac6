"""Tensor value type and a tape-based reverse-mode differentiator.

Every differentiable operation executed while a tape is active appends one
record ``(inputs, output, backward_fn)``.  ``backward`` replays the tape in
reverse execution order and accumulates gradients into ``Tensor.grad``.
Tapes live in thread-local storage, so independent models can be trained in
separate threads without sharing mutable state.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ibis.errors import DimensionError, UsageError

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class TapeRecord:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class GradTape:
    records: list[TapeRecord] = field(default_factory=list)
    enabled: bool = True

    def record(self, inputs, output, backward_fn) -> None:
        self.records.append(TapeRecord(tuple(inputs), output, backward_fn))

    def clear(self) -> None:
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


_local = threading.local()


def current_tape() -> GradTape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = GradTape()
    return tape


@contextmanager
def tape_scope(tape: GradTape | None = None):
    """Make ``tape`` (or a fresh one) the active tape for this thread."""
    previous = getattr(_local, "tape", None)
    tape = tape if tape is not None else GradTape()
    _local.tape = tape
    try:
        yield tape
    finally:
        _local.tape = previous


@contextmanager
def no_grad():
    tape = current_tape()
    was = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = was


def make_op(inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn) -> Tensor:
    """Wrap ``out_data`` and record the op if any input needs a gradient."""
    tape = current_tape()
    needs = tape.enabled and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.record(inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: GradTape | None = None) -> None:
    """Populate ``.grad`` on every requires-grad tensor that ``loss`` depends on.

    Gradients accumulate additively, so callers zero parameter gradients
    between steps.  The tape is cleared afterwards.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = tape if tape is not None else current_tape()
    loss.grad = np.ones_like(loss.data)
    for rec in reversed(tape.records):
        g_out = rec.output.grad
        if g_out is None:
            continue
        grads = rec.backward_fn(g_out)
        for inp, g in zip(rec.inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            if g.shape != inp.data.shape:
                g = unbroadcast(g, inp.data.shape)
            inp.grad = g.copy() if inp.grad is None else inp.grad + g
    tape.clear()


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out axes that numpy broadcasting introduced."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and structural primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op((a, b), a.data + b.data, lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op((a, b), a.data - b.data, lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return make_op((a, b), ad * bd, lambda g: (g * bd, g * ad))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[0] or bd.ndim != 2:
        raise DimensionError(f"matmul shapes {ad.shape} and {bd.shape} do not align")

    def bw(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_op((a, b), ad @ bd, bw)


def tsum(a: Tensor, axis=None) -> Tensor:
    shape = a.data.shape

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_op((a,), np.asarray(a.data.sum(axis=axis)), bw)


def mean(a: Tensor, axis=None) -> Tensor:
    shape = a.data.shape
    n = a.data.size if axis is None else shape[axis]

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, shape),)

    return make_op((a,), np.asarray(a.data.mean(axis=axis)), bw)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return make_op((a,), a.data.reshape(shape), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return make_op((a,), a.data.transpose(axes), lambda g: (g.transpose(inv),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op((a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return make_op((a,), np.log(ad), lambda g: (g / ad,))
