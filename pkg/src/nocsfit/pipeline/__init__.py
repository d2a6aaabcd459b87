"""End-to-end orchestration: experiment config, training, inference,
evaluation sweeps, trend benchmark, reporting, and the CLI."""

from .config import ExperimentConfig
from .train import TrainResult, train
from .inference import (
    PoseEstimate,
    estimate_pose,
    evaluate,
    evaluate_records,
    oracle_pose_estimate,
)

__all__ = [
    "ExperimentConfig",
    "TrainResult",
    "train",
    "PoseEstimate",
    "estimate_pose",
    "evaluate",
    "evaluate_records",
    "oracle_pose_estimate",
]
