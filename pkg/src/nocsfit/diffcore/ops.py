"""Differentiable primitives over 2D tensors.

Each primitive computes its value eagerly and, when a tape is active,
records a node whose ``backward_fn`` accumulates analytic adjoints into its
operands.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tape, Tensor


def _node(value, parents, backward_fn) -> Tensor:
    tape = Tape.active()
    if tape is None:
        return Tensor(value)
    out = Tensor(value, parents=parents, backward_fn=backward_fn)
    tape.record(out)
    return out


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    if a.cols != b.rows:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def bw(g):
        a.accumulate(g @ b.value.T)
        b.accumulate(a.value.T @ g)

    return _node(a.value @ b.value, (a, b), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")

    def bw(g):
        a.accumulate(g)
        b.accumulate(g)

    return _node(a.value + b.value, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub {a.shape} - {b.shape}")

    def bw(g):
        a.accumulate(g)
        b.accumulate(-g)

    return _node(a.value - b.value, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul {a.shape} * {b.shape}")

    def bw(g):
        a.accumulate(g * b.value)
        b.accumulate(g * a.value)

    return _node(a.value * b.value, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    a = _t(a)
    s = float(s)

    def bw(g):
        a.accumulate(g * s)

    return _node(a.value * s, (a,), bw)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a (C, 1) column vector to every column of a (C, N) matrix."""
    a, bias = _t(a), _t(bias)
    if bias.shape != (a.rows, 1):
        raise ShapeMismatch(f"add_bias {a.shape} with bias {bias.shape}")

    def bw(g):
        a.accumulate(g)
        bias.accumulate(g.sum(axis=1, keepdims=True))

    return _node(a.value + bias.value, (a, bias), bw)


def relu(a: Tensor) -> Tensor:
    a = _t(a)
    mask = a.value > 0.0

    def bw(g):
        a.accumulate(g * mask)

    return _node(a.value * mask, (a,), bw)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    """Stack along the channel (row) axis: (Ca, N) + (Cb, N) -> (Ca+Cb, N)."""
    a, b = _t(a), _t(b)
    if a.cols != b.cols:
        raise ShapeMismatch(f"concat_rows {a.shape} | {b.shape}")
    ca = a.rows

    def bw(g):
        a.accumulate(g[:ca])
        b.accumulate(g[ca:])

    return _node(np.vstack([a.value, b.value]), (a, b), bw)


def gather_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows by index (repeats allowed); adjoint scatter-adds."""
    a = _t(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatch("gather_rows needs a flat index list")

    def bw(g):
        buf = np.zeros_like(a.value)
        np.add.at(buf, idx, g)
        a.accumulate(buf)

    return _node(a.value[idx], (a,), bw)


def tile_cols(a: Tensor, n: int) -> Tensor:
    """Broadcast a (C, 1) column to (C, n)."""
    a = _t(a)
    if a.cols != 1:
        raise ShapeMismatch(f"tile_cols needs a column vector, got {a.shape}")

    def bw(g):
        a.accumulate(g.sum(axis=1, keepdims=True))

    return _node(np.repeat(a.value, n, axis=1), (a,), bw)


def mean_pool_cols(a: Tensor) -> Tensor:
    """(C, N) -> (C, 1) mean over columns."""
    a = _t(a)
    n = a.cols

    def bw(g):
        a.accumulate(np.repeat(g / n, n, axis=1))

    return _node(a.value.mean(axis=1, keepdims=True), (a,), bw)


def max_pool_cols(a: Tensor) -> Tensor:
    """(C, N) -> (C, 1) max over columns; ties route to the lowest index."""
    a = _t(a)
    idx = np.argmax(a.value, axis=1)
    rows = np.arange(a.rows)

    def bw(g):
        buf = np.zeros_like(a.value)
        buf[rows, idx] = g[:, 0]
        a.accumulate(buf)

    return _node(a.value[rows, idx][:, None], (a,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with per-row max subtraction."""
    a = _t(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        a.accumulate(y * (g - (g * y).sum(axis=1, keepdims=True)))

    return _node(y, (a,), bw)


def transpose(a: Tensor) -> Tensor:
    a = _t(a)

    def bw(g):
        a.accumulate(g.T)

    return _node(a.value.T.copy(), (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    """(R, C) -> 1x1 total."""
    a = _t(a)

    def bw(g):
        a.accumulate(np.full_like(a.value, g[0, 0]))

    return _node(np.array([[a.value.sum()]]), (a,), bw)


def sum_rows(a: Tensor) -> Tensor:
    """(R, C) -> (1, C) sum over rows."""
    a = _t(a)
    r = a.rows

    def bw(g):
        a.accumulate(np.repeat(g, r, axis=0))

    return _node(a.value.sum(axis=0, keepdims=True), (a,), bw)


def sum_cols(a: Tensor) -> Tensor:
    """(R, C) -> (R, 1) sum over columns."""
    a = _t(a)
    c = a.cols

    def bw(g):
        a.accumulate(np.repeat(g, c, axis=1))

    return _node(a.value.sum(axis=1, keepdims=True), (a,), bw)


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root; subgradient 0 where the input is 0."""
    a = _t(a)
    y = np.sqrt(np.maximum(a.value, 0.0))

    def bw(g):
        d = np.zeros_like(y)
        pos = y > 0.0
        d[pos] = 0.5 / y[pos]
        a.accumulate(g * d)

    return _node(y, (a,), bw)


def log(a: Tensor) -> Tensor:
    """Elementwise natural log; callers clamp away from zero first."""
    a = _t(a)

    def bw(g):
        a.accumulate(g / a.value)

    return _node(np.log(a.value), (a,), bw)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient is zero in the clamped region."""
    a = _t(a)
    floor = float(floor)
    mask = a.value > floor

    def bw(g):
        a.accumulate(g * mask)

    return _node(np.maximum(a.value, floor), (a,), bw)


def smooth_l1(a: Tensor, beta: float = 0.1) -> Tensor:
    """Elementwise soft-L1: x^2/(2*beta) for |x| <= beta, else |x| - beta/2.

    Value and first derivative are continuous at |x| = beta.
    """
    a = _t(a)
    beta = float(beta)
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    absx = np.abs(a.value)
    inner = absx <= beta
    out = np.where(inner, a.value * a.value / (2.0 * beta), absx - beta / 2.0)

    def bw(g):
        d = np.where(inner, a.value / beta, np.sign(a.value))
        a.accumulate(g * d)

    return _node(out, (a,), bw)
