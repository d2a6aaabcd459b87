"""Full finite-difference verification sweep.

Covers every encoder, all three relation kinds through both cascade
stages, all heads, and all four loss terms on randomized 8-point
instances. Layer correctness is channel-count independent, so the sweep
runs at small widths to stay fast.
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import GradCheckReport, Parameter, constant, finite_diff_check
from ..featnet import RelationKind
from ..geometry import ColoredPointCloud, PointCloud
from ..reconstruction import (
    ModelConfig,
    ReconstructionModel,
    ReconTargets,
    loss_corr_reg,
    loss_correspondence,
    loss_deformation_reg,
    loss_overall,
    loss_reconstruction,
)

ALL_KINDS = (RelationKind.MLP, RelationKind.NONLOCAL, RelationKind.TRANSFORMER)


def _sweep_config(kind: RelationKind) -> ModelConfig:
    return ModelConfig(
        texture_channels=6, geometry_channels=6, category_channels=6,
        encoder_hidden=8, relation_hidden=8, head_hidden=8, corr_dim=6,
        instance_relation=kind, category_relation=kind,
    )


def _randomize_zero_layers(model: ReconstructionModel, rng) -> None:
    for p in model.parameters():
        if not p.value.any():
            p.value[...] = 0.3 * rng.normal(size=p.shape)


def full_gradient_sweep(tolerance: float = 1e-4, seed: int = 20240831):
    """Run every check; returns (all_passed, list of result lines)."""
    rng = np.random.default_rng(seed)
    lines: list[str] = []
    ok = True

    def run(name: str, report: GradCheckReport):
        nonlocal ok
        status = "pass" if report.passed else "FAIL"
        lines.append(
            f"[{status}] {name}: worst rel err {report.worst:.3e} "
            f"over {len(report.checks)} parameters"
        )
        if not report.passed:
            ok = False
            lines.extend("    " + l for l in report.summary().splitlines()[1:])

    obs = ColoredPointCloud(rng.normal(size=(8, 3)), rng.uniform(size=(8, 3)))
    prior = PointCloud(rng.uniform(-0.5, 0.5, size=(6, 3)))
    targets = ReconTargets(
        model_points=rng.uniform(-0.5, 0.5, size=(6, 3)),
        coords=rng.uniform(-0.5, 0.5, size=(8, 3)),
    )

    # full stacks: every encoder, both cascade stages, every head, every
    # loss term, unrolled through one residual refinement
    for kind in ALL_KINDS:
        model = ReconstructionModel(_sweep_config(kind), seed=7)
        _randomize_zero_layers(model, rng)

        def loss(m=model):
            out = m.recurrent_reconstruct(obs, prior, steps=1)
            return loss_overall(out, targets, [1.0, 1.0])

        run(f"stack[{kind.value}] encoders+irn+crn+heads+losses, K=1",
            finite_diff_check(loss, model.parameters(), tolerance=tolerance))

    # individual losses against a free input cloud
    cloud = Parameter(rng.normal(size=(8, 3)), "free.cloud")
    target_pts = rng.normal(size=(8, 3))
    run("loss_reconstruction",
        finite_diff_check(lambda: loss_reconstruction(cloud.tensor, target_pts),
                          [cloud], tolerance=tolerance))

    offsets = Parameter(rng.normal(size=(8, 3)) + 0.4, "free.offsets")
    run("loss_deformation_reg",
        finite_diff_check(lambda: loss_deformation_reg(offsets.tensor),
                          [offsets], tolerance=tolerance))

    coords = Parameter(rng.normal(scale=0.2, size=(8, 3)), "free.coords")
    gt = rng.normal(scale=0.2, size=(8, 3))
    run("loss_correspondence",
        finite_diff_check(lambda: loss_correspondence(coords.tensor, gt),
                          [coords], tolerance=tolerance))

    logits = Parameter(rng.normal(size=(8, 6)), "free.logits")
    run("loss_corr_reg",
        finite_diff_check(lambda: loss_corr_reg(dc.softmax_rows(logits.tensor)),
                          [logits], tolerance=tolerance))

    return ok, lines
