"""Synthetic data: priors, instances, observations, and the NFD1 container."""

import numpy as np
import pytest

from nocsfit.errors import (
    ChecksumMismatch,
    FormatError,
    TooFewVisiblePoints,
    UnknownCategory,
)
from nocsfit.geometry import (
    apply_transform,
    chamfer_distance,
    rotation_about_axis,
    rotation_error_degrees,
    umeyama,
)
from nocsfit.synthdata import (
    CATEGORY_NAMES,
    CategorySpec,
    DatasetConfig,
    PoseParams,
    ShapeVariation,
    build_item,
    generate_dataset,
    load_dataset,
    make_prior,
    render_observation,
    sample_instance,
    save_dataset,
)


# -------------------------------------------------------------------- priors


@pytest.mark.parametrize("name", CATEGORY_NAMES)
def test_prior_deterministic_and_normalized(name):
    spec = CategorySpec(name, 128)
    a = make_prior(spec)
    b = make_prior(spec)
    np.testing.assert_array_equal(a.cloud.points, b.cloud.points)
    np.testing.assert_array_equal(a.colors, b.colors)
    pts = a.cloud.points
    diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
    assert abs(diag - 1.0) < 1e-9
    assert np.abs(pts).max() <= 0.5 + 1e-12
    assert a.colors.min() >= 0.0 and a.colors.max() <= 1.0


@pytest.mark.parametrize("name", ["bottle", "bowl", "can"])
def test_symmetric_prior_yaw_invariant(name):
    prior = make_prior(CategorySpec(name, 256))
    rot = rotation_about_axis([0, 1, 0], np.radians(30.0))
    rotated = prior.cloud.points @ rot.T
    assert chamfer_distance(prior.cloud.points, rotated) < 1e-3


def test_symmetric_flags():
    assert CategorySpec("bottle").symmetric
    assert CategorySpec("bowl").symmetric
    assert CategorySpec("can").symmetric
    assert not CategorySpec("camera").symmetric
    assert not CategorySpec("laptop").symmetric
    assert not CategorySpec("mug").symmetric


def test_mug_has_handle_mask():
    mug = make_prior(CategorySpec("mug", 200))
    assert mug.handle_mask.sum() > 10
    bottle = make_prior(CategorySpec("bottle", 200))
    assert bottle.handle_mask.sum() == 0


def test_unknown_category():
    with pytest.raises(UnknownCategory):
        CategorySpec("teapot")


# ----------------------------------------------------------------- instances


def test_zero_variation_instance_equals_prior():
    prior = make_prior(CategorySpec("bowl", 128))
    inst = sample_instance(prior, ShapeVariation((1.0, 1.0), 0.0), seed=5)
    np.testing.assert_allclose(inst.points, prior.cloud.points, atol=1e-12)
    np.testing.assert_allclose(inst.gt_deformation, 0.0, atol=1e-12)


def test_instance_seed_reproducible():
    prior = make_prior(CategorySpec("camera", 128))
    var = ShapeVariation()
    a = sample_instance(prior, var, seed=9)
    b = sample_instance(prior, var, seed=9)
    np.testing.assert_array_equal(a.points, b.points)
    c = sample_instance(prior, var, seed=10)
    assert not np.array_equal(a.points, c.points)


@pytest.mark.parametrize("name", CATEGORY_NAMES)
def test_instance_decomposition_exact(name):
    prior = make_prior(CategorySpec(name, 128))
    inst = sample_instance(prior, ShapeVariation(), seed=3)
    np.testing.assert_array_equal(
        prior.cloud.points + inst.gt_deformation, inst.points
    )
    diag = np.linalg.norm(inst.points.max(axis=0) - inst.points.min(axis=0))
    assert abs(diag - 1.0) < 1e-9
    assert np.abs(inst.points).max() <= 0.5 + 1e-9


def test_symmetric_instance_stays_yaw_symmetric():
    prior = make_prior(CategorySpec("bottle", 256))
    inst = sample_instance(prior, ShapeVariation(), seed=11)
    rot = rotation_about_axis([0, 1, 0], np.radians(30.0))
    assert chamfer_distance(inst.points, inst.points @ rot.T) < 1e-3


# -------------------------------------------------------------- observations


def _noise_free_obs(seed=21, category="camera", crop=0.0):
    prior = make_prior(CategorySpec(category, 256))
    inst = sample_instance(prior, ShapeVariation(), seed=seed)
    return render_observation(
        inst, PoseParams(), noise_sigma=0.0, crop_fraction=crop,
        n_points=256, seed=seed + 1,
    )


def test_observation_pose_roundtrip_exact():
    obs = _noise_free_obs()
    t = umeyama(obs.gt_nocs, obs.cloud.points)
    assert abs(t.scale - obs.gt_pose.scale) < 1e-9
    assert np.max(np.abs(t.rotation - obs.gt_pose.rotation)) < 1e-9
    assert np.max(np.abs(t.translation - obs.gt_pose.translation)) < 1e-9


def test_observation_keystone_identity():
    # noiseless cloud is exactly the posed canonical coordinates
    for crop in (0.0, 0.3):
        obs = _noise_free_obs(seed=33, crop=crop)
        posed = apply_transform(obs.gt_pose, obs.gt_nocs)
        np.testing.assert_array_equal(posed.points, obs.cloud.points)
        assert np.abs(obs.gt_nocs).max() <= 0.5 + 1e-9


def test_observation_noisy_recovery_monte_carlo():
    prior = make_prior(CategorySpec("laptop", 1024))
    rot_errs, scale_errs, trans_errs = [], [], []
    for seed in range(100):
        inst = sample_instance(prior, ShapeVariation(), seed=(7, seed))
        obs = render_observation(
            inst, PoseParams(), noise_sigma=0.001, crop_fraction=0.0,
            n_points=1024, seed=(8, seed),
        )
        t = umeyama(obs.gt_nocs, obs.cloud.points)
        rot_errs.append(rotation_error_degrees(t.rotation, obs.gt_pose.rotation))
        scale_errs.append(abs(t.scale - obs.gt_pose.scale))
        trans_errs.append(np.linalg.norm(t.translation - obs.gt_pose.translation))
    assert max(rot_errs) < 1e-2 * 180 / np.pi * 10  # degrees, loose cap
    assert np.median(rot_errs) < 1.0
    assert max(scale_errs) < 1e-2
    assert max(trans_errs) < 1e-2


def test_observation_same_seed_bitwise():
    a = _noise_free_obs(seed=40)
    b = _noise_free_obs(seed=40)
    np.testing.assert_array_equal(a.cloud.points, b.cloud.points)
    np.testing.assert_array_equal(a.gt_nocs, b.gt_nocs)
    assert a.gt_pose.to_array().tolist() == b.gt_pose.to_array().tolist()


def test_observation_crop_and_replacement():
    prior = make_prior(CategorySpec("bowl", 200))
    inst = sample_instance(prior, ShapeVariation(), seed=2)
    obs = render_observation(
        inst, PoseParams(), noise_sigma=0.0, crop_fraction=0.4,
        n_points=200, seed=3,
    )
    assert len(obs.cloud) == 200  # resampled with replacement
    with pytest.raises(TooFewVisiblePoints):
        render_observation(
            inst, PoseParams(), noise_sigma=0.0, crop_fraction=0.9,
            n_points=200, seed=3,
        )


def test_mug_handle_visibility_flag():
    prior = make_prior(CategorySpec("mug", 256))
    inst = sample_instance(prior, ShapeVariation(), seed=6)
    handle_dir = np.array([1.0, 0.0, 0.0])  # handle extends +x
    seen = {True: 0, False: 0}
    for seed in range(40):
        obs = render_observation(
            inst, PoseParams(), noise_sigma=0.0, crop_fraction=0.35,
            n_points=128, seed=seed,
        )
        seen[obs.handle_visible] += 1
    assert seen[True] > 0 and seen[False] > 0
    del handle_dir


def test_yaw_only_fraction():
    prior = make_prior(CategorySpec("can", 128))
    inst = sample_instance(prior, ShapeVariation(), seed=1)
    pose = PoseParams(yaw_only_fraction=1.0)
    for seed in range(10):
        obs = render_observation(inst, pose, 0.0, 0.0, 128, seed)
        # yaw rotations keep +y fixed
        np.testing.assert_allclose(
            obs.gt_pose.rotation @ [0, 1, 0], [0, 1, 0], atol=1e-12
        )


# ------------------------------------------------------------------- dataset


def _small_cfg(**kw):
    base = dict(
        categories=("bottle", "mug"), n_observations=6,
        n_instance_points=64, n_observed_points=48,
        noise_sigma=0.001, crop_fraction=0.25, master_seed=123,
    )
    base.update(kw)
    return DatasetConfig(**base)


def test_generate_deterministic():
    cfg = _small_cfg()
    a = generate_dataset(cfg)
    b = generate_dataset(cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.cloud.points, y.cloud.points)
        np.testing.assert_array_equal(x.gt_nocs, y.gt_nocs)


def test_build_item_matches_generate():
    cfg = _small_cfg()
    full = generate_dataset(cfg)
    item = build_item(cfg, 3)
    np.testing.assert_array_equal(full[3].cloud.points, item.cloud.points)


def test_dataset_roundtrip(tmp_path):
    cfg = _small_cfg()
    obs = generate_dataset(cfg)
    path = tmp_path / "data.nfd"
    save_dataset(path, cfg, obs)
    cfg2, loaded = load_dataset(path)
    assert cfg2 == cfg
    assert len(loaded) == len(obs)
    for x, y in zip(obs, loaded):
        np.testing.assert_array_equal(x.cloud.points, y.cloud.points)
        np.testing.assert_array_equal(x.cloud.colors, y.cloud.colors)
        np.testing.assert_array_equal(x.gt_nocs, y.gt_nocs)
        np.testing.assert_array_equal(
            x.gt_pose.to_array(), y.gt_pose.to_array()
        )
        assert x.category == y.category
        assert x.handle_visible == y.handle_visible
        assert x.rng_seed == y.rng_seed
        # instance reference regenerates bit-identically from the config
        np.testing.assert_array_equal(x.instance.points, y.instance.points)


def test_dataset_truncation_rejected(tmp_path):
    cfg = _small_cfg()
    path = tmp_path / "data.nfd"
    save_dataset(path, cfg, generate_dataset(cfg))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(FormatError):
        load_dataset(path)


def test_dataset_bitflip_rejected(tmp_path):
    cfg = _small_cfg()
    path = tmp_path / "data.nfd"
    save_dataset(path, cfg, generate_dataset(cfg))
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0x10  # flip one bit mid-payload
    path.write_bytes(bytes(blob))
    with pytest.raises(ChecksumMismatch):
        load_dataset(path)


def test_dataset_bad_magic(tmp_path):
    path = tmp_path / "data.nfd"
    path.write_bytes(b"JUNKJUNKJUNKJUNK")
    with pytest.raises(FormatError):
        load_dataset(path)
