"""Encoders, relation functions, and the cascaded relation stages."""

import numpy as np
import pytest

from nocsfit import diffcore as dc
from nocsfit.diffcore import Tape, backward, constant, finite_diff_check
from nocsfit.errors import ShapeMismatch
from nocsfit.featnet import (
    CategoryRelationStage,
    InstanceRelationStage,
    Linear,
    PointEncoder,
    RelationFunction,
    RelationKind,
    encode_colored_points,
    encode_points,
    relation_kind,
)

ALL_KINDS = [RelationKind.MLP, RelationKind.NONLOCAL, RelationKind.TRANSFORMER]


def _mixed_sum(out, seed=0):
    mixer = np.random.default_rng(seed).normal(size=out.shape)
    return dc.sum_all(dc.mul(out, constant(mixer)))


def test_relation_kind_parsing():
    assert relation_kind("-") is None
    assert relation_kind("none") is None
    assert relation_kind("T") is RelationKind.TRANSFORMER
    assert relation_kind("mlp") is RelationKind.MLP
    assert relation_kind("N") is RelationKind.NONLOCAL
    with pytest.raises(ValueError):
        relation_kind("conv")


# ------------------------------------------------------------------ encoders


def test_encoder_zero_weights_zero_features(rng):
    enc = PointEncoder(3, 8, 6, "enc", rng)
    enc.l1.zero_()
    enc.l2.zero_()
    fm = encode_points(enc, rng.normal(size=(10, 3)), "geometry")
    np.testing.assert_array_equal(fm.tensor.value, np.zeros((6, 10)))


def test_encoder_permutation_equivariance(rng):
    enc = PointEncoder(3, 8, 6, "enc", rng)
    pts = rng.normal(size=(12, 3))
    perm = rng.permutation(12)
    a = encode_points(enc, pts, "geometry").tensor.value
    b = encode_points(enc, pts[perm], "geometry").tensor.value
    np.testing.assert_array_equal(a[:, perm], b)


def test_texture_encoder_consumes_colors(rng):
    enc = PointEncoder(6, 8, 5, "tex", rng)
    pts = rng.normal(size=(7, 3))
    cols = rng.uniform(size=(7, 3))
    a = encode_colored_points(enc, pts, cols).tensor.value
    b = encode_colored_points(enc, pts, np.clip(cols + 0.3, 0, 1)).tensor.value
    assert not np.allclose(a, b)


def test_encoder_gradcheck(rng):
    enc = PointEncoder(3, 6, 4, "enc", rng)
    pts = rng.normal(size=(8, 3))

    def loss():
        return _mixed_sum(enc(constant(pts.T)))

    report = finite_diff_check(loss, enc.parameters())
    assert report.passed, report.summary()


# ---------------------------------------------------------------- relations


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_fresh_relation_emits_zero_message(kind, rng):
    g = RelationFunction(kind, 6, "g", rng)
    a = constant(rng.normal(size=(6, 5)))
    b = constant(rng.normal(size=(6, 9)))
    np.testing.assert_array_equal(g(a, b).value, np.zeros((6, 5)))


def test_transformer_attention_rows_stochastic(rng):
    g = RelationFunction(RelationKind.TRANSFORMER, 6, "g", rng)
    cap = {}
    g(constant(rng.normal(size=(6, 5))), constant(rng.normal(size=(6, 9))), cap)
    attn = cap["attention"]
    assert attn.shape == (5, 9)
    np.testing.assert_allclose(attn.sum(axis=1), np.ones(5), atol=1e-12)
    assert np.all(attn > 0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_relation_permutation_behaviour(kind, rng):
    g = RelationFunction(kind, 6, "g", rng)
    g.out.w.value[...] = rng.normal(size=g.out.w.shape)  # non-zero projection
    a = rng.normal(size=(6, 7))
    b = rng.normal(size=(6, 9))
    pb = rng.permutation(9)
    pa = rng.permutation(7)
    base = g(constant(a), constant(b)).value
    permuted_b = g(constant(a), constant(b[:, pb])).value
    np.testing.assert_allclose(permuted_b, base, atol=1e-12)
    permuted_a = g(constant(a[:, pa]), constant(b)).value
    np.testing.assert_allclose(permuted_a, base[:, pa], atol=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_relation_gradcheck(kind, rng):
    g = RelationFunction(kind, 5, "g", rng, hidden=7)
    g.out.w.value[...] = 0.3 * rng.normal(size=g.out.w.shape)
    a = rng.normal(size=(5, 8))
    b = rng.normal(size=(5, 8))

    def loss():
        return _mixed_sum(g(constant(a), constant(b)))

    report = finite_diff_check(loss, g.parameters())
    assert report.passed, report.summary()


def test_relation_channel_mismatch(rng):
    g = RelationFunction(RelationKind.TRANSFORMER, 5, "g", rng)
    with pytest.raises(ShapeMismatch):
        g(constant(rng.normal(size=(5, 4))), constant(rng.normal(size=(6, 4))))


# ------------------------------------------------------------------- stages


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_irn_residual_identity_when_projection_zeroed(kind, rng):
    irn = InstanceRelationStage(kind, 6, "irn", rng)
    irn.g.out.zero_()
    ft = constant(rng.normal(size=(6, 10)))
    fg = constant(rng.normal(size=(6, 10)))
    fhat_t, fhat_g, f_i = irn(ft, fg)
    np.testing.assert_array_equal(fhat_t.value, ft.value)
    np.testing.assert_array_equal(fhat_g.value, fg.value)
    assert f_i.shape == (12, 10)


def test_irn_none_kind_passthrough(rng):
    irn = InstanceRelationStage(None, 6, "irn", rng)
    ft = constant(rng.normal(size=(6, 10)))
    fg = constant(rng.normal(size=(6, 10)))
    fhat_t, fhat_g, f_i = irn(ft, fg)
    assert fhat_t is ft and fhat_g is fg
    np.testing.assert_array_equal(f_i.value, np.vstack([ft.value, fg.value]))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_crn_residual_identity_when_projection_zeroed(kind, rng):
    crn = CategoryRelationStage(kind, 12, 6, "crn", rng)
    crn.g.out.zero_()
    f_i = constant(rng.normal(size=(12, 10)))
    f_c = constant(rng.normal(size=(6, 7)))
    fhat_i, fhat_c = crn(f_i, f_c)
    np.testing.assert_array_equal(fhat_i.value, f_i.value)
    np.testing.assert_array_equal(fhat_c.value, f_c.value)


def test_crn_shape_contract(rng):
    crn = CategoryRelationStage(RelationKind.TRANSFORMER, 12, 6, "crn", rng)
    f_i = constant(rng.normal(size=(12, 10)))
    f_c = constant(rng.normal(size=(6, 7)))
    fhat_i, fhat_c = crn(f_i, f_c)
    assert fhat_i.shape == (12, 10)
    assert fhat_c.shape == (6, 7)


def test_crn_category_permutation_equivariance(rng):
    crn = CategoryRelationStage(RelationKind.TRANSFORMER, 12, 6, "crn", rng)
    crn.g.out.w.value[...] = rng.normal(size=(6, 6))
    crn.lift.w.value[...] = rng.normal(size=crn.lift.w.shape)
    f_i = rng.normal(size=(12, 10))
    f_c = rng.normal(size=(6, 7))
    perm = rng.permutation(7)
    fhat_i, fhat_c = crn(constant(f_i), constant(f_c))
    fhat_i_p, fhat_c_p = crn(constant(f_i), constant(f_c[:, perm]))
    np.testing.assert_allclose(fhat_c_p.value, fhat_c.value[:, perm], atol=1e-12)
    np.testing.assert_allclose(fhat_i_p.value, fhat_i.value, atol=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_full_cascade_gradcheck(kind, rng):
    # IRN -> concat -> CRN on an 8-point instance against a 6-point prior
    irn = InstanceRelationStage(kind, 5, "irn", rng)
    crn = CategoryRelationStage(kind, 10, 5, "crn", rng)
    for stage in (irn, crn):
        stage.g.out.w.value[...] = 0.3 * rng.normal(size=stage.g.out.w.shape)
    crn.lift.w.value[...] = 0.3 * rng.normal(size=crn.lift.w.shape)
    ft = rng.normal(size=(5, 8))
    fg = rng.normal(size=(5, 8))
    fc = rng.normal(size=(5, 6))

    def loss():
        _, _, f_i = irn(constant(ft), constant(fg))
        fhat_i, fhat_c = crn(f_i, constant(fc))
        return dc.add(_mixed_sum(fhat_i, 1), _mixed_sum(fhat_c, 2))

    params = irn.parameters() + crn.parameters()
    report = finite_diff_check(loss, params)
    assert report.passed, report.summary()


def test_linear_gradcheck_with_bias(rng):
    lin = Linear(4, 3, "lin", rng)
    x = rng.normal(size=(4, 6))

    def loss():
        return _mixed_sum(lin(constant(x)))

    report = finite_diff_check(loss, lin.parameters(), tolerance=1e-6)
    assert report.passed, report.summary()
