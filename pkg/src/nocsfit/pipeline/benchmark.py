"""Fixed-seed trend benchmark.

Three runs per seed on a shared toy dataset (4 categories, 200 train / 50
test, 256 points, 30 epochs):

  baseline    no relation stages, single-shot (K=0)
  recurrent   no relation stages, two refinement steps (K=2)
  relation    transformer relations both stages, single-shot (K=0)

The expected directions: recurrent beats baseline on mean Chamfer and on
the 10deg5cm accuracy; relation beats baseline on mean Chamfer. Asserted
by majority over seeds. The summary document is canonical JSON, so two
runs with the same seeds must produce identical bytes.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor

from ..synthdata import generate_dataset
from .config import ExperimentConfig
from .inference import evaluate
from .train import train

BENCH_SEEDS = (0, 1, 2)
VARIANTS = {
    "baseline": dict(instance_relation="-", category_relation="-", steps=0,
                     lambdas=(1.0,)),
    "recurrent": dict(instance_relation="-", category_relation="-", steps=2,
                      lambdas=(1.0, 1.0, 1.0)),
    "relation": dict(instance_relation="transformer",
                     category_relation="transformer", steps=0, lambdas=(1.0,)),
}


def benchmark_config(seed: int, variant: str) -> ExperimentConfig:
    """Toy-scale recipe; every variant of one seed shares the datasets."""
    return ExperimentConfig(
        data_seed=1000 + seed,
        model_seed=2000 + seed,
        train_seed=3000 + seed,
        categories=("bottle", "bowl", "laptop", "mug"),
        n_train=200, n_val=16, n_test=50,
        n_observed_points=256, n_instance_points=256,
        noise_sigma=0.002, crop_fraction=0.3, yaw_only_fraction=1.0,
        texture_channels=24, geometry_channels=24, category_channels=24,
        encoder_hidden=24, relation_hidden=24, head_hidden=24, corr_dim=24,
        lr=1e-3, lr_decay_every=10, epochs=30,
        **VARIANTS[variant],
    )


def run_variant(seed: int, variant: str) -> dict:
    """Train one variant and evaluate at its final step count."""
    cfg = benchmark_config(seed, variant)
    train_set = generate_dataset(cfg.dataset_config("train"))
    val_set = generate_dataset(cfg.dataset_config("val"))
    test_set = generate_dataset(cfg.dataset_config("test"))
    result = train(cfg, train_set, val_set)
    table = evaluate(result.model, test_set, cfg, k_values=[cfg.steps])[cfg.steps].table
    return {
        "seed": seed,
        "variant": variant,
        "mean_cd": table.mean["mean_cd"],
        "acc_10deg5cm": table.mean["10deg5cm"],
        "acc_5deg5cm": table.mean["5deg5cm"],
        "per_category_cd": {c: table.per_category[c]["mean_cd"]
                            for c in table.per_category},
        "first_val_total": result.log[0]["val_total"],
        "final_val_total": result.log[-1]["val_total"],
        "best_epoch": result.best_epoch,
    }


def _task(args):
    return run_variant(*args)


def trend_benchmark(seeds=BENCH_SEEDS, workers: int | None = None) -> dict:
    """Run all (seed, variant) tasks, then aggregate directional outcomes."""
    tasks = [(seed, variant) for seed in seeds for variant in VARIANTS]
    if workers is None:
        workers = min(len(tasks), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_task, tasks))
    else:
        outcomes = [_task(t) for t in tasks]

    by_run = {}
    for out in outcomes:
        by_run.setdefault(f"seed{out['seed']}", {})[out["variant"]] = out

    recurrent_cd_wins = []
    recurrent_acc_wins = []
    relation_cd_wins = []
    for seed in seeds:
        run = by_run[f"seed{seed}"]
        recurrent_cd_wins.append(run["recurrent"]["mean_cd"] < run["baseline"]["mean_cd"])
        recurrent_acc_wins.append(
            run["recurrent"]["acc_10deg5cm"] > run["baseline"]["acc_10deg5cm"]
        )
        relation_cd_wins.append(run["relation"]["mean_cd"] < run["baseline"]["mean_cd"])

    majority = len(seeds) // 2 + 1
    return {
        "seeds": list(seeds),
        "runs": by_run,
        "comparisons": {
            "recurrent_beats_baseline_cd": recurrent_cd_wins,
            "recurrent_beats_baseline_10deg5cm": recurrent_acc_wins,
            "relation_beats_baseline_cd": relation_cd_wins,
            "recurrent_cd_majority": sum(recurrent_cd_wins) >= majority,
            "recurrent_acc_majority": sum(recurrent_acc_wins) >= majority,
            "relation_cd_majority": sum(relation_cd_wins) >= majority,
        },
    }


def benchmark_json(doc: dict) -> str:
    """Canonical byte representation used for determinism comparison."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
