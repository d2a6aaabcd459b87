"""Report emission: delimited series plus rendered figures.

Every series is written as a CSV next to a matplotlib PNG of the same
stem: loss curves over epochs, the recurrent-step sweep, and per-category
Chamfer distance.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from ..evalmetrics import METRIC_COLUMNS, records_to_csv
from .inference import EvalResult
from .train import COMPONENT_KEYS


def write_eval_outputs(out_dir, results: dict[int, EvalResult]) -> list[Path]:
    """metrics_k<k>.json and records_k<k>.csv per step count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for k, res in sorted(results.items()):
        mpath = out_dir / f"metrics_k{k}.json"
        mpath.write_text(res.table.to_json(indent=2) + "\n", encoding="utf-8")
        rpath = out_dir / f"records_k{k}.csv"
        rpath.write_text(records_to_csv(res.records), encoding="utf-8")
        written += [mpath, rpath]
    return written


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def loss_curve_report(train_log: list[dict], out_dir) -> list[Path]:
    """Per-epoch training components, validation CD, and the figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    keys = [*COMPONENT_KEYS, "total", "val_cd", "val_total"]
    rows = [[e["epoch"], *[e[k] for k in keys]] for e in train_log]
    csv_path = out_dir / "loss_curves.csv"
    _write_csv(csv_path, ["epoch", *keys], rows)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    epochs = [e["epoch"] for e in train_log]
    for key in (*COMPONENT_KEYS, "total"):
        ax1.plot(epochs, [e[key] for e in train_log], label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax1.set_yscale("log")
    ax1.legend(fontsize=7)
    ax2.plot(epochs, [e["val_cd"] for e in train_log], label="val chamfer")
    ax2.plot(epochs, [e["val_total"] for e in train_log], label="val total")
    ax2.set_xlabel("epoch")
    ax2.set_yscale("log")
    ax2.legend(fontsize=7)
    fig.tight_layout()
    png_path = out_dir / "loss_curves.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def _load_metric_files(eval_dir) -> dict[int, dict]:
    tables = {}
    for path in sorted(Path(eval_dir).glob("metrics_k*.json")):
        k = int(path.stem.split("metrics_k")[1])
        tables[k] = json.loads(path.read_text(encoding="utf-8"))
    return tables


def ksweep_report(eval_dir, out_dir) -> list[Path]:
    """Mean metrics per recurrent step count: CSV and grouped bars."""
    tables = _load_metric_files(eval_dir)
    if not tables:
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = [*METRIC_COLUMNS, "mean_cd"]
    rows = [[k, *[tables[k]["mean"][c] for c in cols]] for k in sorted(tables)]
    csv_path = out_dir / "ksweep.csv"
    _write_csv(csv_path, ["steps", *cols], rows)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ks = sorted(tables)
    width = 0.8 / len(METRIC_COLUMNS)
    for i, col in enumerate(METRIC_COLUMNS):
        xs = [k + (i - len(METRIC_COLUMNS) / 2) * width for k in ks]
        ax1.bar(xs, [tables[k]["mean"][col] for k in ks], width=width, label=col)
    ax1.set_xticks(ks)
    ax1.set_xlabel("recurrent steps")
    ax1.set_ylabel("accuracy")
    ax1.legend(fontsize=7)
    ax2.plot(ks, [tables[k]["mean"]["mean_cd"] for k in ks], marker="o")
    ax2.set_xticks(ks)
    ax2.set_xlabel("recurrent steps")
    ax2.set_ylabel("mean chamfer")
    fig.tight_layout()
    png_path = out_dir / "ksweep.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def category_cd_report(eval_dir, out_dir) -> list[Path]:
    """Per-category Chamfer distance at the largest evaluated step count."""
    tables = _load_metric_files(eval_dir)
    if not tables:
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = tables[max(tables)]
    cats = sorted(doc["per_category"])
    rows = [[c, doc["per_category"][c]["mean_cd"]] for c in cats]
    csv_path = out_dir / "category_cd.csv"
    _write_csv(csv_path, ["category", "mean_cd"], rows)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(cats, [doc["per_category"][c]["mean_cd"] for c in cats])
    ax.set_ylabel("mean chamfer")
    fig.tight_layout()
    png_path = out_dir / "category_cd.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]
