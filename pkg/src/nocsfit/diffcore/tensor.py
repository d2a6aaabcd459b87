"""Graph nodes, the recording tape, and the reverse pass."""

from __future__ import annotations

import numpy as np

from ..errors import NonScalarLoss, ShapeMismatch


class Tensor:
    """A 2D float64 value, optionally with provenance for the reverse pass.

    ``parents`` and ``backward_fn`` are only populated while a Tape is
    active; outside a tape every operation produces detached values.
    """

    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        v = np.ascontiguousarray(value, dtype=float)
        if v.ndim != 2:
            raise ShapeMismatch(f"tensors are 2D, got shape {v.shape}")
        self.value = v
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeMismatch(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def constant(value) -> Tensor:
    """A leaf node carrying data that never needs a gradient."""
    return Tensor(value)


class Tape:
    """Ordered record of the primitives executed while it is active.

    Creation order is topological, so one reverse sweep visits every node
    exactly once. Tapes nest; the innermost active tape records.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        Tape._stack.pop()
        return False

    @staticmethod
    def active() -> "Tape | None":
        return Tape._stack[-1] if Tape._stack else None

    def record(self, node: Tensor) -> None:
        self.nodes.append(node)


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(node) into every leaf reachable from ``loss``.

    Parameters keep their persistent gradient buffers, so gradients add up
    across calls until explicitly zeroed; leaves never touched by the tape
    keep whatever is in their buffer (zeros after ``zero_grad``).
    """
    if loss.shape != (1, 1):
        raise NonScalarLoss(f"loss must be 1x1, got {loss.shape}")
    loss.accumulate(np.ones((1, 1)))
    for node in reversed(tape.nodes):
        if node.grad is not None and node.backward_fn is not None:
            node.backward_fn(node.grad)


class Parameter:
    """A named leaf with a persistent gradient buffer.

    Identifiers must be unique within a model; they key the optimizer state
    and the weight container.
    """

    __slots__ = ("tensor", "name")

    def __init__(self, value, name: str):
        self.tensor = Tensor(value)
        self.tensor.grad = np.zeros_like(self.tensor.value)
        self.name = name

    @property
    def value(self) -> np.ndarray:
        return self.tensor.value

    @property
    def grad(self) -> np.ndarray:
        return self.tensor.grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.tensor.shape

    def zero_grad(self) -> None:
        self.tensor.grad[:] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"
