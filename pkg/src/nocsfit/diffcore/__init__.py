"""Minimal dense-matrix compute layer with reverse-mode differentiation.

Everything is a 2D double-precision matrix. Primitives record onto the
active :class:`Tape`; :func:`backward` replays it once in reverse. An
adaptive-moment optimizer, a finite-difference gradient checker, and a
binary weight container round out the layer.
"""

from .tensor import Parameter, Tape, Tensor, backward, constant
from .ops import (
    add,
    add_bias,
    clamp_min,
    concat_rows,
    gather_rows,
    log,
    matmul,
    max_pool_cols,
    mean_pool_cols,
    mul,
    relu,
    scale,
    smooth_l1,
    softmax_rows,
    sqrt,
    sub,
    sum_all,
    sum_cols,
    sum_rows,
    tile_cols,
    transpose,
)
from .optim import AdamState, adam_step
from .gradcheck import GradCheckReport, finite_diff_check
from .weights import load_weights, save_weights

__all__ = [
    "Tensor", "Tape", "Parameter", "backward", "constant",
    "matmul", "add", "sub", "mul", "scale", "add_bias", "relu",
    "concat_rows", "gather_rows", "tile_cols", "mean_pool_cols",
    "max_pool_cols", "softmax_rows", "transpose", "sum_all", "sum_rows",
    "sum_cols", "sqrt", "log", "clamp_min", "smooth_l1",
    "AdamState", "adam_step",
    "GradCheckReport", "finite_diff_check",
    "save_weights", "load_weights",
]
