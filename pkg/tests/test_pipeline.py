"""Config, training loop, pose inference, and evaluation sweeps."""

import json

import numpy as np
import pytest

from nocsfit.errors import (
    DegenerateConfiguration,
    FormatError,
    NoConsensus,
)
from nocsfit.featnet import RelationKind
from nocsfit.pipeline import (
    ExperimentConfig,
    estimate_pose,
    evaluate,
    evaluate_records,
    oracle_pose_estimate,
    train,
)
from nocsfit.pipeline.train import COMPONENT_KEYS
from nocsfit.reconstruction import ReconstructionModel
from nocsfit.synthdata import CategorySpec, generate_dataset, make_prior


def tiny_experiment(**kw):
    base = dict(
        data_seed=1, model_seed=2, train_seed=3,
        categories=("bottle", "mug"), n_train=4, n_val=2, n_test=3,
        n_observed_points=32, n_instance_points=32,
        noise_sigma=0.001, crop_fraction=0.25, yaw_only_fraction=1.0,
        texture_channels=8, geometry_channels=8, category_channels=8,
        encoder_hidden=8, relation_hidden=8, head_hidden=8, corr_dim=8,
        instance_relation="-", category_relation="-",
        steps=1, lambdas=(1.0, 1.0), lr=1e-3, epochs=1,
        ransac_iterations=32,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def _sets(cfg):
    return (
        generate_dataset(cfg.dataset_config("train")),
        generate_dataset(cfg.dataset_config("val")),
        generate_dataset(cfg.dataset_config("test")),
    )


# -------------------------------------------------------------------- config


def test_config_json_roundtrip():
    cfg = tiny_experiment(steps=2, lambdas=(0.5, 1.0, 1.0))
    text = cfg.to_json()
    back = ExperimentConfig.from_json(text)
    assert back == cfg


def test_config_requires_seeds():
    cfg = tiny_experiment()
    raw = json.loads(cfg.to_json())
    del raw["model_seed"]
    with pytest.raises(FormatError):
        ExperimentConfig.from_json(json.dumps(raw))


def test_config_rejects_unknown_fields():
    cfg = tiny_experiment()
    raw = json.loads(cfg.to_json())
    raw["learning_rate"] = 0.1
    with pytest.raises(FormatError):
        ExperimentConfig.from_json(json.dumps(raw))


def test_config_validates_lambdas():
    with pytest.raises(ValueError):
        tiny_experiment(steps=2, lambdas=(1.0, 1.0))


def test_config_relation_parsing():
    cfg = tiny_experiment(instance_relation="T", category_relation="N")
    mc = cfg.model_config()
    assert mc.instance_relation is RelationKind.TRANSFORMER
    assert mc.category_relation is RelationKind.NONLOCAL
    with pytest.raises(ValueError):
        tiny_experiment(instance_relation="conv")


def test_config_split_seeds_differ():
    cfg = tiny_experiment()
    seeds = {cfg.dataset_config(s).master_seed for s in ("train", "val", "test")}
    assert len(seeds) == 3


# ------------------------------------------------------------------ training


def test_train_logging_contract():
    cfg = tiny_experiment()
    train_set, val_set, _ = _sets(cfg)
    result = train(cfg, train_set, val_set)
    assert len(result.log) == 1
    entry = result.log[0]
    for key in (*COMPONENT_KEYS, "total", "val_cd", "val_total", "lr", "epoch"):
        assert key in entry
    assert entry["lr"] == cfg.lr


def test_train_deterministic_bitwise():
    cfg = tiny_experiment(epochs=2)
    train_set, val_set, _ = _sets(cfg)
    a = train(cfg, train_set, val_set)
    b = train(cfg, train_set, val_set)
    for pa, pb in zip(a.model.parameters(), b.model.parameters()):
        np.testing.assert_array_equal(pa.value, pb.value)
    assert a.log == b.log


def test_train_lr_schedule():
    cfg = tiny_experiment(epochs=3, lr_decay_every=2, lr=1e-3)
    train_set, val_set, _ = _sets(cfg)
    result = train(cfg, train_set, val_set)
    lrs = [e["lr"] for e in result.log]
    assert lrs == [1e-3, 1e-3, 1e-4]


def test_train_gradient_accumulation_runs():
    cfg = tiny_experiment(grad_accum=3)
    train_set, val_set, _ = _sets(cfg)
    result = train(cfg, train_set, val_set)
    assert np.isfinite(result.log[0]["total"])


# ------------------------------------------------------------------ inference


def test_oracle_pose_exact_recovery():
    cfg = tiny_experiment(noise_sigma=0.0, n_test=6, n_observed_points=64,
                          n_instance_points=64)
    _, _, test_set = _sets(cfg)
    for obs in test_set:
        est = oracle_pose_estimate(obs, rng_seed=obs.rng_seed)
        assert abs(est.transform.scale - obs.gt_pose.scale) < 1e-6
        assert np.max(np.abs(est.transform.rotation - obs.gt_pose.rotation)) < 1e-6
        assert (
            np.linalg.norm(est.transform.translation - obs.gt_pose.translation) < 1e-6
        )
        assert est.inlier_count == len(obs.cloud)


def test_untrained_uniform_correspondences_degenerate():
    cfg = tiny_experiment(noise_sigma=0.0)
    _, _, test_set = _sets(cfg)
    model = ReconstructionModel(cfg.model_config(), cfg.model_seed)
    model.corr.proj_obs.zero_()
    model.corr.proj_prior.zero_()
    prior = make_prior(CategorySpec("bottle", cfg.n_instance_points)).cloud
    obs = next(o for o in test_set if o.category == "bottle")
    with pytest.raises((NoConsensus, DegenerateConfiguration)):
        estimate_pose(obs, prior, model, steps=0)


def test_evaluate_failures_recorded_not_raised():
    cfg = tiny_experiment(noise_sigma=0.0)
    _, _, test_set = _sets(cfg)
    model = ReconstructionModel(cfg.model_config(), cfg.model_seed)
    model.corr.proj_obs.zero_()
    model.corr.proj_prior.zero_()
    results = evaluate(model, test_set, cfg, k_values=[0])
    records = results[0].records
    assert len(records) == len(test_set)
    assert all(r.translation_m == float("inf") for r in records)
    assert results[0].table.mean["5deg2cm"] == 0.0


def test_evaluate_k_sweep_table_count():
    cfg = tiny_experiment(steps=2, lambdas=(1.0, 1.0, 1.0))
    _, _, test_set = _sets(cfg)
    model = ReconstructionModel(cfg.model_config(), cfg.model_seed)
    results = evaluate(model, test_set, cfg)
    assert sorted(results) == [0, 1, 2]


def test_oracle_evaluation_perfect_table():
    cfg = tiny_experiment(noise_sigma=0.0, n_test=6)
    _, _, test_set = _sets(cfg)
    records = evaluate_records(
        test_set, lambda obs: oracle_pose_estimate(obs, rng_seed=obs.rng_seed)
    )
    from nocsfit.evalmetrics import accuracy_table

    table = accuracy_table(records)
    for key in ("3d_50", "3d_75", "5deg2cm", "5deg5cm", "10deg2cm", "10deg5cm"):
        assert table.mean[key] == 1.0
    assert table.mean["mean_cd"] < 1e-9
