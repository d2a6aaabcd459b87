"""Canonical-shape reconstruction: deformation and correspondence heads,
the recurrent residual refinement loop, and the training losses.

The recurrent loop re-encodes the deformed prior each step, reruns the
category relation stage against the cached instance embedding, and
composes residuals: deformations add, correspondence matrices multiply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Parameter, Tensor, constant
from .errors import EmptyCloud, LengthMismatch, ShapeMismatch
from .featnet import (
    CategoryRelationStage,
    InstanceRelationStage,
    Linear,
    PointEncoder,
    RelationKind,
)
from .geometry import ColoredPointCloud, PointCloud, nearest_neighbor_indices

ROW_SUM_TOL = 1e-9


# --------------------------------------------------------- value-level types


@dataclass(frozen=True)
class DeformationField:
    """Per-prior-point offsets, canonical units, shape (N_c, 3)."""

    offsets: np.ndarray

    def __post_init__(self):
        off = np.ascontiguousarray(self.offsets, dtype=float)
        if off.ndim != 2 or off.shape[1] != 3:
            raise ShapeMismatch(f"deformation must be (N_c, 3), got {off.shape}")
        if not np.all(np.isfinite(off)):
            raise ValueError("deformation offsets must be finite")
        object.__setattr__(self, "offsets", off)

    def __len__(self):
        return self.offsets.shape[0]


def _check_row_stochastic(w: np.ndarray, what: str) -> np.ndarray:
    w = np.ascontiguousarray(w, dtype=float)
    if w.ndim != 2:
        raise ShapeMismatch(f"{what} must be a matrix, got shape {w.shape}")
    if w.min() < 0.0:
        raise ValueError(f"{what} must be entrywise nonnegative")
    if np.max(np.abs(w.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
        raise ValueError(f"{what} rows must sum to 1 within {ROW_SUM_TOL}")
    return w


@dataclass(frozen=True)
class CorrespondenceMatrix:
    """Row-stochastic (N_p, N_c): observed point -> convex weights on priors."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "weights", _check_row_stochastic(self.weights, "correspondence")
        )


@dataclass(frozen=True)
class ResidualCorrespondence:
    """Row-stochastic (N_c, N_c) redistribution applied by right-composition."""

    weights: np.ndarray

    def __post_init__(self):
        w = _check_row_stochastic(self.weights, "residual correspondence")
        if w.shape[0] != w.shape[1]:
            raise ShapeMismatch(f"residual correspondence must be square, got {w.shape}")
        object.__setattr__(self, "weights", w)


def reconstruct_model(prior: PointCloud, deformation: DeformationField) -> PointCloud:
    """Pointwise prior + offsets."""
    if len(prior) != len(deformation):
        raise ShapeMismatch(
            f"prior has {len(prior)} points, deformation {len(deformation)}"
        )
    return PointCloud(prior.points + deformation.offsets)


def predicted_nocs_coords(m: CorrespondenceMatrix, model: PointCloud) -> np.ndarray:
    """Canonical coordinate per observed point: weights @ model points."""
    if m.weights.shape[1] != len(model):
        raise ShapeMismatch(
            f"correspondence has {m.weights.shape[1]} columns, model {len(model)} points"
        )
    return m.weights @ model.points


# ---------------------------------------------------------------------- heads


class DeformationHead:
    """[category feature column | pooled instance context] -> 3 offsets.

    The final layer starts at zero so the initial deformation is exactly
    the zero field.
    """

    def __init__(self, category_channels, instance_channels, hidden, name, rng):
        self.l1 = Linear(category_channels + instance_channels, hidden, f"{name}.l1", rng)
        self.l2 = Linear(hidden, hidden, f"{name}.l2", rng)
        self.l3 = Linear(hidden, 3, f"{name}.l3", rng, zero_init=True)

    def __call__(self, fhat_c: Tensor, fhat_i: Tensor) -> Tensor:
        context = dc.tile_cols(dc.mean_pool_cols(fhat_i), fhat_c.cols)
        h = dc.relu(self.l2(dc.relu(self.l1(dc.concat_rows(fhat_c, context)))))
        return self.l3(h)  # (3, N_c)

    def parameters(self):
        return self.l1.parameters() + self.l2.parameters() + self.l3.parameters()


class CorrespondenceHead:
    """Scaled dot-product of projected features, row softmax over priors."""

    def __init__(self, instance_channels, category_channels, dim, name, rng):
        self.proj_obs = Linear(instance_channels, dim, f"{name}.obs", rng)
        self.proj_prior = Linear(category_channels, dim, f"{name}.prior", rng)
        self.dim = dim

    def __call__(self, fhat_i: Tensor, fhat_c: Tensor) -> Tensor:
        logits = dc.scale(
            dc.matmul(dc.transpose(self.proj_obs(fhat_i)), self.proj_prior(fhat_c)),
            1.0 / math.sqrt(self.dim),
        )
        return dc.softmax_rows(logits)  # (N_p, N_c)

    def parameters(self):
        return self.proj_obs.parameters() + self.proj_prior.parameters()


class ResidualCorrespondenceHead:
    """Square redistribution over prior points via the same mechanism."""

    def __init__(self, category_channels, dim, name, rng):
        self.proj_cur = Linear(category_channels, dim, f"{name}.cur", rng)
        self.proj_prev = Linear(category_channels, dim, f"{name}.prev", rng)
        self.dim = dim

    def __call__(self, fhat_c_cur: Tensor, fhat_c_prev: Tensor) -> Tensor:
        if fhat_c_cur.cols != fhat_c_prev.cols:
            raise ShapeMismatch(
                f"residual head needs equal point counts: "
                f"{fhat_c_cur.shape} vs {fhat_c_prev.shape}"
            )
        logits = dc.scale(
            dc.matmul(
                dc.transpose(self.proj_cur(fhat_c_cur)), self.proj_prev(fhat_c_prev)
            ),
            1.0 / math.sqrt(self.dim),
        )
        return dc.softmax_rows(logits)  # (N_c, N_c)

    def parameters(self):
        return self.proj_cur.parameters() + self.proj_prev.parameters()


# ---------------------------------------------------------------------- model


@dataclass(frozen=True)
class ModelConfig:
    """Channel plan and relation choices for the full network."""

    texture_channels: int = 64
    geometry_channels: int = 64
    category_channels: int = 64
    encoder_hidden: int = 64
    relation_hidden: int = 64
    head_hidden: int = 64
    corr_dim: int = 64
    instance_relation: RelationKind | None = RelationKind.TRANSFORMER
    category_relation: RelationKind | None = RelationKind.TRANSFORMER

    def __post_init__(self):
        if self.texture_channels != self.geometry_channels:
            # one weight set serves both IRN directions with swapped args
            raise ValueError("texture and geometry channel counts must match")
        for n in (
            self.texture_channels, self.category_channels, self.encoder_hidden,
            self.relation_hidden, self.head_hidden, self.corr_dim,
        ):
            if n < 1:
                raise ValueError("channel counts must be positive")

    @property
    def instance_channels(self) -> int:
        return self.texture_channels + self.geometry_channels


@dataclass
class RecurrentOutput:
    """Per-step graph nodes, index 0 is the initial shot.

    deformations[k]: (N_c, 3) cumulative field, correspondences[k]:
    (N_p, N_c) row-stochastic, models[k]: prior + deformation, coords[k]:
    (N_p, 3) predicted canonical coordinates.
    """

    deformations: list = field(default_factory=list)
    correspondences: list = field(default_factory=list)
    models: list = field(default_factory=list)
    coords: list = field(default_factory=list)
    captures: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.deformations) - 1

    def last_deformation(self) -> DeformationField:
        return DeformationField(self.deformations[-1].value)

    def last_correspondence(self) -> CorrespondenceMatrix:
        return CorrespondenceMatrix(self.correspondences[-1].value)

    def last_model(self) -> PointCloud:
        return PointCloud(self.models[-1].value)


def _normalized_coords(points: np.ndarray) -> np.ndarray:
    """Center on the centroid and scale by the bounding-box diagonal.

    Encoder inputs only; poses are always solved against the raw
    camera-frame coordinates.
    """
    centered = points - points.mean(axis=0)
    diag = float(np.linalg.norm(centered.max(axis=0) - centered.min(axis=0)))
    if diag <= 0.0:
        diag = 1.0
    return centered / diag


class ReconstructionModel:
    """Encoders, cascaded relation stages, and the three output heads."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        h = cfg.encoder_hidden
        self.texture = PointEncoder(6, h, cfg.texture_channels, "featnet.texture", rng)
        self.geometry = PointEncoder(3, h, cfg.geometry_channels, "featnet.geometry", rng)
        self.category = PointEncoder(3, h, cfg.category_channels, "featnet.category", rng)
        self.irn = InstanceRelationStage(
            cfg.instance_relation, cfg.texture_channels, "featnet.irn", rng
        )
        self.crn = CategoryRelationStage(
            cfg.category_relation, cfg.instance_channels, cfg.category_channels,
            "featnet.crn", rng,
        )
        self.deform = DeformationHead(
            cfg.category_channels, cfg.instance_channels, cfg.head_hidden,
            "recon.deform", rng,
        )
        self.corr = CorrespondenceHead(
            cfg.instance_channels, cfg.category_channels, cfg.corr_dim,
            "recon.corr", rng,
        )
        self.residual = ResidualCorrespondenceHead(
            cfg.category_channels, cfg.corr_dim, "recon.residual", rng
        )

    def parameters(self) -> list[Parameter]:
        parts = (
            self.texture, self.geometry, self.category,
            self.irn, self.crn, self.deform, self.corr, self.residual,
        )
        return [p for part in parts for p in part.parameters()]

    # residual producers share weights with the initial heads; tests and
    # harnesses override these two hooks to force identity residuals
    def _residual_deformation(self, fhat_c: Tensor, fhat_i: Tensor) -> Tensor:
        return self.deform(fhat_c, fhat_i)

    def _residual_correspondence(self, fhat_c_cur: Tensor, fhat_c_prev: Tensor) -> Tensor:
        return self.residual(fhat_c_cur, fhat_c_prev)

    def encode_instance(self, obs: ColoredPointCloud, capture: dict | None = None):
        """Texture/geometry encoding plus instance relation; returns the
        cached instance embedding used by every recurrent step."""
        norm = _normalized_coords(obs.points)
        f_t = self.texture(constant(np.vstack([norm.T, obs.colors.T])))
        f_g = self.geometry(constant(norm.T))
        _, _, f_i = self.irn(f_t, f_g, capture)
        return f_i

    def recurrent_reconstruct(
        self,
        obs: ColoredPointCloud,
        prior: PointCloud,
        steps: int = 0,
        capture_attention: bool = False,
    ) -> RecurrentOutput:
        """Initial shot plus ``steps`` residual refinements.

        Step k re-encodes the deformed prior, reruns the category relation
        against the cached instance embedding, and composes
        D_k = D_{k-1} + residual, M_k = M_{k-1} @ residual.
        """
        if steps < 0:
            raise ValueError("steps must be >= 0")
        out = RecurrentOutput()
        cap: dict | None = {} if capture_attention else None
        f_i = self.encode_instance(obs, cap)
        prior_rows = constant(prior.points)  # (N_c, 3)

        f_c = self.category(constant(prior.points.T))
        fhat_i, fhat_c = self.crn(f_i, f_c, cap)
        d = dc.transpose(self.deform(fhat_c, fhat_i))  # (N_c, 3)
        m = self.corr(fhat_i, fhat_c)  # (N_p, N_c)
        model = dc.add(prior_rows, d)
        coords = dc.matmul(m, model)
        out.deformations.append(d)
        out.correspondences.append(m)
        out.models.append(model)
        out.coords.append(coords)
        out.captures.append(cap or {})
        fhat_c_prev = fhat_c

        for _ in range(steps):
            cap = {} if capture_attention else None
            f_c_k = self.category(dc.transpose(model))
            fhat_i_k, fhat_c_k = self.crn(f_i, f_c_k, cap)
            d_res = dc.transpose(self._residual_deformation(fhat_c_k, fhat_i_k))
            m_res = self._residual_correspondence(fhat_c_k, fhat_c_prev)
            d = dc.add(d, d_res)
            m = dc.matmul(m, m_res)
            model = dc.add(prior_rows, d)
            coords = dc.matmul(m, model)
            out.deformations.append(d)
            out.correspondences.append(m)
            out.models.append(model)
            out.coords.append(coords)
            out.captures.append(cap or {})
            fhat_c_prev = fhat_c_k
        return out


# --------------------------------------------------------------------- losses


def loss_reconstruction(pred_model: Tensor, target_points: np.ndarray) -> Tensor:
    """Two-sided squared-nearest-neighbour loss; gradients reach the
    prediction only (targets enter as constants)."""
    target = np.asarray(target_points, dtype=float)
    if pred_model.rows == 0 or target.shape[0] == 0:
        raise EmptyCloud("reconstruction loss needs non-empty clouds")
    ia = nearest_neighbor_indices(pred_model.value, target)
    ib = nearest_neighbor_indices(target, pred_model.value)
    fwd_diff = dc.sub(pred_model, constant(target[ia]))
    bwd_diff = dc.sub(dc.gather_rows(pred_model, ib), constant(target))
    return dc.add(
        dc.sum_all(dc.mul(fwd_diff, fwd_diff)),
        dc.sum_all(dc.mul(bwd_diff, bwd_diff)),
    )


def loss_deformation_reg(deformation: Tensor) -> Tensor:
    """Mean Euclidean norm of the offset rows (zero rows contribute zero
    subgradient)."""
    norms = dc.sqrt(dc.sum_cols(dc.mul(deformation, deformation)))
    return dc.scale(dc.sum_all(norms), 1.0 / deformation.rows)


def loss_correspondence(coords: Tensor, coords_gt: np.ndarray) -> Tensor:
    """Soft-L1 between predicted and true canonical coordinates, averaged
    over all summed elements."""
    gt = np.asarray(coords_gt, dtype=float)
    if coords.shape != gt.shape:
        raise ShapeMismatch(f"coords {coords.shape} vs targets {gt.shape}")
    elems = dc.smooth_l1(dc.sub(coords, constant(gt)), beta=0.1)
    return dc.scale(dc.sum_all(elems), 1.0 / (coords.rows * coords.cols))


def loss_corr_reg(m: Tensor) -> Tensor:
    """Mean per-row Shannon entropy, rows clamped away from zero by 1e-12.

    Zero exactly at one-hot rows (up to the clamp's vanishing tail)."""
    p = dc.clamp_min(m, 1e-12)
    return dc.scale(dc.sum_all(dc.mul(p, dc.log(p))), -1.0 / m.rows)


@dataclass(frozen=True)
class LossWeights:
    reconstruction: float = 1.0
    deformation_reg: float = 1.0
    correspondence: float = 1.0
    corr_reg: float = 1e-4


@dataclass(frozen=True)
class ReconTargets:
    """Supervision for one instance: canonical model and per-point coords."""

    model_points: np.ndarray  # ground-truth canonical model, (N, 3)
    coords: np.ndarray  # ground-truth canonical coordinate per observed point


def step_losses(out: RecurrentOutput, targets: ReconTargets,
                weights: LossWeights = LossWeights()) -> list[dict[str, Tensor]]:
    """Weighted loss components for every recurrent step."""
    per_step = []
    for model, m, coords, d in zip(
        out.models, out.correspondences, out.coords, out.deformations
    ):
        per_step.append(
            {
                "reconstruction": dc.scale(
                    loss_reconstruction(model, targets.model_points),
                    weights.reconstruction,
                ),
                "deformation_reg": dc.scale(
                    loss_deformation_reg(d), weights.deformation_reg
                ),
                "correspondence": dc.scale(
                    loss_correspondence(coords, targets.coords),
                    weights.correspondence,
                ),
                "corr_reg": dc.scale(loss_corr_reg(m), weights.corr_reg),
            }
        )
    return per_step


def overall_from_steps(per_step: list[dict[str, Tensor]], lambdas) -> Tensor:
    """Combine per-step components: sum_k lambda_k * (sum of components)."""
    lambdas = [float(l) for l in lambdas]
    if len(lambdas) != len(per_step):
        raise LengthMismatch(
            f"{len(lambdas)} step weights for {len(per_step)} steps"
        )
    if any(l < 0.0 for l in lambdas):
        raise ValueError("step weights must be nonnegative")
    total = None
    for lam, comps in zip(lambdas, per_step):
        composite = comps["reconstruction"]
        for key in ("deformation_reg", "correspondence", "corr_reg"):
            composite = dc.add(composite, comps[key])
        term = dc.scale(composite, lam)
        total = term if total is None else dc.add(total, term)
    return total


def loss_overall(out: RecurrentOutput, targets: ReconTargets, lambdas,
                 weights: LossWeights = LossWeights()) -> Tensor:
    """Deep supervision: sum over steps of lambda_k times the composite."""
    if len(lambdas) != len(out.deformations):
        raise LengthMismatch(
            f"{len(lambdas)} step weights for {len(out.deformations)} steps"
        )
    return overall_from_steps(step_losses(out, targets, weights), lambdas)
