"""Command-line interface.

Subcommands: gen, train, eval, infer, gradcheck, plot-data. Every flag can
also be supplied through an environment variable named NF_<FLAG> (dashes
become underscores, uppercased). Failures print a JSON error object to
stderr and exit nonzero; argparse usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from ..diffcore import load_weights, save_weights
from ..errors import NocsfitError
from ..reconstruction import ReconstructionModel
from ..synthdata import generate_dataset, load_dataset, save_dataset
from .config import ExperimentConfig
from .gradsweep import full_gradient_sweep
from .inference import estimate_pose, evaluate
from .train import train
from . import report


def _env(flag: str) -> str | None:
    return os.environ.get("NF_" + flag.upper().replace("-", "_"))


def _add(parser: argparse.ArgumentParser, flag: str, required: bool = False, **kw):
    """Option whose default comes from NF_<FLAG> when set."""
    env_value = _env(flag)
    if env_value is not None:
        kw["default"] = env_value
        required = False
    parser.add_argument(f"--{flag}", required=required, **kw)


def _load_cfg(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config)


def _dataset(path_or_none, cfg: ExperimentConfig, split: str):
    if path_or_none:
        return load_dataset(path_or_none)[1]
    return generate_dataset(cfg.dataset_config(split))


def cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    data_cfg = cfg.dataset_config(args.split)
    observations = generate_dataset(data_cfg)
    save_dataset(args.out, data_cfg, observations)
    print(json.dumps({"written": str(args.out), "observations": len(observations)}))
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    train_set = _dataset(args.train_data, cfg, "train")
    val_set = _dataset(args.val_data, cfg, "val")
    result = train(cfg, train_set, val_set, verbose=args.verbose)
    save_weights(args.out, result.model.parameters())
    if args.log_out:
        Path(args.log_out).write_text(
            json.dumps(result.log, indent=2) + "\n", encoding="utf-8"
        )
    print(
        json.dumps(
            {
                "weights": str(args.out),
                "epochs": cfg.epochs,
                "best_epoch": result.best_epoch,
                "best_val_cd": result.best_val_cd,
            }
        )
    )
    return 0


def _model_with_weights(cfg: ExperimentConfig, weights_path) -> ReconstructionModel:
    model = ReconstructionModel(cfg.model_config(), cfg.model_seed)
    load_weights(weights_path, model.parameters())
    return model


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    model = _model_with_weights(cfg, args.weights)
    test_set = _dataset(args.test_data, cfg, "test")
    k_values = (
        [int(k) for k in str(args.k_values).split(",")]
        if args.k_values
        else list(range(cfg.steps + 1))
    )
    results = evaluate(model, test_set, cfg, k_values)
    written = report.write_eval_outputs(args.out_dir, results)
    summary = {f"k{k}": res.table.mean for k, res in sorted(results.items())}
    summary["written"] = [str(p) for p in written]
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_infer(args) -> int:
    cfg = _load_cfg(args)
    model = _model_with_weights(cfg, args.weights)
    _, observations = load_dataset(args.data)
    index = int(args.index)
    if not 0 <= index < len(observations):
        raise NocsfitError(
            f"index {index} out of range for {len(observations)} observations"
        )
    obs = observations[index]
    from ..synthdata import CategorySpec, make_prior

    prior = make_prior(CategorySpec(obs.category, cfg.n_instance_points)).cloud
    estimate = estimate_pose(
        obs, prior, model, cfg.steps,
        ransac_iterations=cfg.ransac_iterations,
        ransac_threshold=cfg.ransac_threshold,
        rng_seed=obs.rng_seed,
    )
    print(
        json.dumps(
            {
                "scale": estimate.transform.scale,
                "rotation": estimate.transform.rotation.reshape(9).tolist(),
                "translation": estimate.transform.translation.tolist(),
                "inlier_count": estimate.inlier_count,
                "category": obs.category,
            }
        )
    )
    return 0


def cmd_gradcheck(args) -> int:
    ok, lines = full_gradient_sweep(tolerance=float(args.tolerance))
    for line in lines:
        print(line)
    print("all passed" if ok else "FAILED")
    return 0 if ok else 1


def cmd_plot_data(args) -> int:
    written = []
    if args.log:
        log = json.loads(Path(args.log).read_text(encoding="utf-8"))
        written += report.loss_curve_report(log, args.out_dir)
    if args.eval_dir:
        written += report.ksweep_report(args.eval_dir, args.out_dir)
        written += report.category_cd_report(args.eval_dir, args.out_dir)
    if not written:
        raise NocsfitError("plot-data needs --log and/or --eval-dir")
    print(json.dumps({"written": [str(p) for p in written]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nocsfit",
        description="Category-level 6D pose estimation on synthetic point clouds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset file")
    _add(p, "config", required=True, help="experiment config JSON")
    _add(p, "split", default="train", choices=["train", "val", "test"])
    _add(p, "out", required=True, help="output .nfd path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model")
    _add(p, "config", required=True)
    _add(p, "train-data", dest="train_data", default=None,
         help="dataset file (default: generate from config)")
    _add(p, "val-data", dest="val_data", default=None)
    _add(p, "out", required=True, help="output weight container")
    _add(p, "log-out", dest="log_out", default=None, help="per-epoch log JSON")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate weights over a K sweep")
    _add(p, "config", required=True)
    _add(p, "weights", required=True)
    _add(p, "test-data", dest="test_data", default=None)
    _add(p, "k-values", dest="k_values", default=None,
         help="comma-separated step counts (default 0..K)")
    _add(p, "out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="pose for one saved observation")
    _add(p, "config", required=True)
    _add(p, "weights", required=True)
    _add(p, "data", required=True, help="dataset file")
    _add(p, "index", default="0")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gradcheck", help="finite-difference sweep of the stack")
    _add(p, "tolerance", default="1e-4")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot-data", help="emit CSV series and figures")
    _add(p, "log", default=None, help="training log JSON")
    _add(p, "eval-dir", dest="eval_dir", default=None, help="eval output directory")
    _add(p, "out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except NocsfitError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return 1
    except OSError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
