"""Per-point encoders, cross-feature relation functions, and the two
cascaded relation stages (instance texture<->geometry, instance<->category).

Features are channels-by-points matrices. Every stage adds its relation
message residually, so zeroing a relation's output projection makes the
stage an exact identity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Parameter, Tensor, constant
from .errors import ShapeMismatch


class RelationKind(enum.Enum):
    MLP = "mlp"
    NONLOCAL = "nonlocal"
    TRANSFORMER = "transformer"


# ablation-grid shorthand ("-", "M", "N", "T") and full names both parse
_KIND_ALIASES = {
    "-": None,
    "none": None,
    "m": RelationKind.MLP,
    "mlp": RelationKind.MLP,
    "n": RelationKind.NONLOCAL,
    "nonlocal": RelationKind.NONLOCAL,
    "non-local": RelationKind.NONLOCAL,
    "t": RelationKind.TRANSFORMER,
    "transformer": RelationKind.TRANSFORMER,
}


def relation_kind(name) -> RelationKind | None:
    """Parse a relation kind from config text; None disables the stage."""
    if name is None or isinstance(name, RelationKind):
        return name
    key = str(name).strip().lower()
    if key not in _KIND_ALIASES:
        raise ValueError(f"unknown relation kind {name!r}")
    return _KIND_ALIASES[key]


@dataclass
class FeatureMatrix:
    """A channels-by-points feature block with its role tag."""

    tensor: Tensor
    role: str  # texture | geometry | category | instance

    @property
    def channels(self) -> int:
        return self.tensor.rows

    @property
    def npoints(self) -> int:
        return self.tensor.cols


def kaiming_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    bound = math.sqrt(6.0 / in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


class Linear:
    """y = W x + b applied column-wise; optional zero init for W."""

    def __init__(self, in_dim, out_dim, name, rng, zero_init=False):
        w = np.zeros((out_dim, in_dim)) if zero_init else kaiming_uniform(rng, out_dim, in_dim)
        self.w = Parameter(w, f"{name}.w")
        self.b = Parameter(np.zeros((out_dim, 1)), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return dc.add_bias(dc.matmul(self.w.tensor, x), self.b.tensor)

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]

    def zero_(self) -> None:
        """Zero weights and bias in place (test harness / identity start)."""
        self.w.value[...] = 0.0
        self.b.value[...] = 0.0


class PointEncoder:
    """Shared per-point MLP: in_dim -> hidden (rectified) -> out channels.

    Columns are independent, so permuting input points permutes output
    columns identically.
    """

    def __init__(self, in_dim, hidden, out_dim, name, rng):
        self.l1 = Linear(in_dim, hidden, f"{name}.l1", rng)
        self.l2 = Linear(hidden, out_dim, f"{name}.l2", rng)
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(dc.relu(self.l1(x)))

    def parameters(self):
        return self.l1.parameters() + self.l2.parameters()


class RelationFunction:
    """A learned cross-feature operator: message into A aggregated from B.

    transformer: single-head scaled dot-product cross-attention (queries
    from A, keys/values from B) followed by a per-column projection.
    nonlocal: embedded-Gaussian pairwise weights with a plain projection
    value path (no scaling before the row softmax).
    mlp: each A column concatenated with a max-pooled global of B, through
    a shared two-layer MLP back to C channels.

    The final projection is zero-initialized, so a fresh relation emits an
    exactly-zero message. When ``capture`` is passed to the call, attention
    kinds store their row-stochastic weight matrix under ``"attention"``.
    """

    def __init__(self, kind: RelationKind, channels: int, name: str,
                 rng: np.random.Generator, hidden: int = 64):
        self.kind = kind
        self.channels = channels
        if kind is RelationKind.TRANSFORMER:
            self.wq = Linear(channels, channels, f"{name}.wq", rng)
            self.wk = Linear(channels, channels, f"{name}.wk", rng)
            self.wv = Linear(channels, channels, f"{name}.wv", rng)
            self.out = Linear(channels, channels, f"{name}.out", rng, zero_init=True)
        elif kind is RelationKind.NONLOCAL:
            self.theta = Linear(channels, channels, f"{name}.theta", rng)
            self.phi = Linear(channels, channels, f"{name}.phi", rng)
            self.g = Linear(channels, channels, f"{name}.g", rng)
            self.out = Linear(channels, channels, f"{name}.out", rng, zero_init=True)
        elif kind is RelationKind.MLP:
            self.l1 = Linear(2 * channels, hidden, f"{name}.l1", rng)
            self.out = Linear(hidden, channels, f"{name}.out", rng, zero_init=True)
        else:
            raise ValueError(f"unsupported relation kind: {kind}")

    def __call__(self, a: Tensor, b: Tensor, capture: dict | None = None) -> Tensor:
        if a.rows != b.rows:
            raise ShapeMismatch(
                f"relation arguments need equal channels: {a.shape} vs {b.shape}"
            )
        if self.kind is RelationKind.TRANSFORMER:
            q = self.wq(a)
            k = self.wk(b)
            v = self.wv(b)
            scores = dc.scale(dc.matmul(dc.transpose(q), k), 1.0 / math.sqrt(self.channels))
            attn = dc.softmax_rows(scores)  # (Na, Nb)
            if capture is not None:
                capture["attention"] = attn.value.copy()
            pooled = dc.matmul(v, dc.transpose(attn))  # (C, Na)
            return self.out(pooled)
        if self.kind is RelationKind.NONLOCAL:
            weights = dc.softmax_rows(dc.matmul(dc.transpose(self.theta(a)), self.phi(b)))
            if capture is not None:
                capture["attention"] = weights.value.copy()
            pooled = dc.matmul(self.g(b), dc.transpose(weights))
            return self.out(pooled)
        pooled = dc.tile_cols(dc.max_pool_cols(b), a.cols)
        h = dc.relu(self.l1(dc.concat_rows(a, pooled)))
        return self.out(h)

    def parameters(self):
        if self.kind is RelationKind.TRANSFORMER:
            layers = (self.wq, self.wk, self.wv, self.out)
        elif self.kind is RelationKind.NONLOCAL:
            layers = (self.theta, self.phi, self.g, self.out)
        else:
            layers = (self.l1, self.out)
        return [p for layer in layers for p in layer.parameters()]


class InstanceRelationStage:
    """Texture<->geometry relation with residual injection.

    One weight set serves both directions with swapped arguments; the
    relation-enhanced instance embedding is the channel concatenation of
    the two injected features. ``kind=None`` degrades to plain residual
    identity plus concatenation.
    """

    def __init__(self, kind: RelationKind | None, channels: int, name: str,
                 rng: np.random.Generator):
        self.g = RelationFunction(kind, channels, f"{name}.g", rng) if kind else None

    def __call__(self, f_t: Tensor, f_g: Tensor, capture: dict | None = None):
        if f_t.cols != f_g.cols:
            raise ShapeMismatch(f"IRN needs matching points: {f_t.shape} vs {f_g.shape}")
        if self.g is None:
            fhat_t, fhat_g = f_t, f_g
        else:
            cap_t = {} if capture is not None else None
            fhat_t = dc.add(f_t, self.g(f_t, f_g, cap_t))
            fhat_g = dc.add(f_g, self.g(f_g, f_t))
            if capture is not None and cap_t:
                capture["instance_attention"] = cap_t["attention"]
        return fhat_t, fhat_g, dc.concat_rows(fhat_t, fhat_g)

    def parameters(self):
        return self.g.parameters() if self.g else []


class CategoryRelationStage:
    """Instance<->category relation with residual injection.

    The instance embedding is wider than the category one, so a learned
    linear adapter narrows it before the shared relation function and a
    zero-initialized lift widens the instance-side message back. Both
    directions share the relation weights with swapped arguments.
    """

    def __init__(self, kind: RelationKind | None, instance_channels: int,
                 category_channels: int, name: str, rng: np.random.Generator):
        self.g = None
        if kind:
            self.adapter = Linear(instance_channels, category_channels,
                                  f"{name}.adapter", rng)
            self.lift = Linear(category_channels, instance_channels,
                               f"{name}.lift", rng, zero_init=True)
            self.g = RelationFunction(kind, category_channels, f"{name}.g", rng)

    def __call__(self, f_i: Tensor, f_c: Tensor, capture: dict | None = None):
        if self.g is None:
            return f_i, f_c
        f_i_narrow = self.adapter(f_i)
        cap_i = {} if capture is not None else None
        fhat_i = dc.add(f_i, self.lift(self.g(f_i_narrow, f_c, cap_i)))
        fhat_c = dc.add(f_c, self.g(f_c, f_i_narrow))
        if capture is not None and cap_i:
            capture["category_attention"] = cap_i["attention"]
        return fhat_i, fhat_c

    def parameters(self):
        if self.g is None:
            return []
        return self.adapter.parameters() + self.lift.parameters() + self.g.parameters()


def encode_points(encoder: PointEncoder, points: np.ndarray, role: str) -> FeatureMatrix:
    """Run a shared per-point encoder over (N, 3) coordinates."""
    x = constant(np.ascontiguousarray(points, dtype=float).T)
    return FeatureMatrix(encoder(x), role)


def encode_colored_points(encoder: PointEncoder, points: np.ndarray,
                          colors: np.ndarray, role: str = "texture") -> FeatureMatrix:
    """Per-point encoder over (x, y, z, r, g, b) columns."""
    stacked = np.vstack([np.asarray(points, float).T, np.asarray(colors, float).T])
    return FeatureMatrix(encoder(constant(stacked)), role)
