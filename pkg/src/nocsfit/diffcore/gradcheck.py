"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Parameter, Tape, Tensor, backward

# Entries whose gradients sit at the finite-difference noise floor compare
# absolutely: the floor scales with the loss magnitude because the central
# difference carries O(eps * |loss| / step) rounding noise.
ABS_FLOOR = 1e-8


@dataclass
class ParameterCheck:
    name: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    checks: list[ParameterCheck]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    def summary(self) -> str:
        status = "all passed" if self.passed else "FAILED"
        lines = [
            f"gradient check: {status} "
            f"(worst rel err {self.worst:.3e}, tolerance {self.tolerance:.1e})"
        ]
        for c in self.checks:
            mark = "ok " if c.passed else "BAD"
            lines.append(f"  [{mark}] {c.name}: {c.max_rel_error:.3e}")
        return "\n".join(lines)


def finite_diff_check(
    loss_fn,
    params: list[Parameter],
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` takes no arguments, must be deterministic, and returns the
    scalar loss Tensor. Every element of every listed parameter is
    perturbed by ``+-step``.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    analytic = {p.name: p.grad.copy() for p in params}

    def eval_loss() -> float:
        out = loss_fn()
        if not isinstance(out, Tensor):
            raise TypeError("loss_fn must return a Tensor")
        return out.item()

    atol = ABS_FLOOR * max(1.0, abs(loss.item()))
    floor = atol / tolerance
    checks = []
    for p in params:
        a = analytic[p.name]
        numeric = np.zeros_like(a)
        flat = p.value.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = eval_loss()
            flat[i] = orig - step
            down = eval_loss()
            flat[i] = orig
            nflat[i] = (up - down) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        rel = float(np.max(np.abs(a - numeric) / denom))
        checks.append(ParameterCheck(p.name, rel, rel < tolerance))
    return GradCheckReport(checks, tolerance)
