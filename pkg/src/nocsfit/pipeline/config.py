"""Experiment configuration: one JSON-serializable recipe for dataset,
model, training, and evaluation. Seeds are mandatory in persisted files."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import FormatError
from ..featnet import relation_kind
from ..reconstruction import LossWeights, ModelConfig
from ..synthdata import CATEGORY_NAMES, DatasetConfig

REQUIRED_SEED_FIELDS = ("data_seed", "model_seed", "train_seed")


@dataclass(frozen=True)
class ExperimentConfig:
    # seeds (mandatory in files)
    data_seed: int
    model_seed: int
    train_seed: int
    # dataset
    categories: tuple = ("bottle", "bowl", "laptop", "mug")
    n_train: int = 200
    n_val: int = 24
    n_test: int = 50
    n_observed_points: int = 256
    n_instance_points: int = 256
    noise_sigma: float = 0.002
    crop_fraction: float = 0.3
    scale_range: tuple = (0.08, 0.4)
    yaw_only_fraction: float = 1.0
    translation_range: float = 0.5
    axis_scale_range: tuple = (0.7, 1.3)
    field_amplitude: float = 0.08
    # model
    texture_channels: int = 64
    geometry_channels: int = 64
    category_channels: int = 64
    encoder_hidden: int = 64
    relation_hidden: int = 64
    head_hidden: int = 64
    corr_dim: int = 64
    instance_relation: str = "transformer"
    category_relation: str = "transformer"
    # recurrent training
    steps: int = 2
    lambdas: tuple = (1.0, 1.0, 1.0)
    w_reconstruction: float = 1.0
    w_deformation_reg: float = 1.0
    w_correspondence: float = 1.0
    w_corr_reg: float = 1e-4
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-6
    lr_decay_every: int = 10
    epochs: int = 50
    grad_accum: int = 1
    # pose solving / metrics
    ransac_iterations: int = 128
    ransac_threshold: float = 0.01
    iou_cells: int = 64  # grid resolution per axis for 3D IoU (>= 40)

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "scale_range", tuple(self.scale_range))
        object.__setattr__(self, "axis_scale_range", tuple(self.axis_scale_range))
        object.__setattr__(self, "lambdas", tuple(float(l) for l in self.lambdas))
        for c in self.categories:
            if c not in CATEGORY_NAMES:
                raise ValueError(f"unknown category {c!r}")
        for name in (
            "n_train", "n_val", "n_test", "n_observed_points",
            "n_instance_points", "epochs", "grad_accum",
            "lr_decay_every", "ransac_iterations",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.iou_cells < 40:
            raise ValueError("iou_cells must be >= 40")
        if len(self.lambdas) != self.steps + 1:
            raise ValueError(
                f"lambdas has {len(self.lambdas)} entries for steps={self.steps}"
            )
        relation_kind(self.instance_relation)  # raises on unknown names
        relation_kind(self.category_relation)

    # ---- derived sub-configs

    def dataset_config(self, split: str) -> DatasetConfig:
        counts = {"train": self.n_train, "val": self.n_val, "test": self.n_test}
        offsets = {"train": 0, "val": 1, "test": 2}
        if split not in counts:
            raise ValueError(f"split must be train/val/test, got {split!r}")
        return DatasetConfig(
            categories=self.categories,
            n_observations=counts[split],
            n_instance_points=self.n_instance_points,
            n_observed_points=self.n_observed_points,
            axis_scale_range=self.axis_scale_range,
            field_amplitude=self.field_amplitude,
            scale_range=self.scale_range,
            yaw_only_fraction=self.yaw_only_fraction,
            translation_range=self.translation_range,
            noise_sigma=self.noise_sigma,
            crop_fraction=self.crop_fraction,
            master_seed=self.data_seed * 10 + offsets[split],
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            texture_channels=self.texture_channels,
            geometry_channels=self.geometry_channels,
            category_channels=self.category_channels,
            encoder_hidden=self.encoder_hidden,
            relation_hidden=self.relation_hidden,
            head_hidden=self.head_hidden,
            corr_dim=self.corr_dim,
            instance_relation=relation_kind(self.instance_relation),
            category_relation=relation_kind(self.category_relation),
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            reconstruction=self.w_reconstruction,
            deformation_reg=self.w_deformation_reg,
            correspondence=self.w_correspondence,
            corr_reg=self.w_corr_reg,
        )

    # ---- serialization

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), sort_keys=True, **kw)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json(indent=2))
            f.write("\n")

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise FormatError("config must be a JSON object")
        missing = [k for k in REQUIRED_SEED_FIELDS if k not in raw]
        if missing:
            raise FormatError(f"config missing mandatory seeds: {', '.join(missing)}")
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise FormatError(f"unknown config fields: {', '.join(unknown)}")
        try:
            return ExperimentConfig(**raw)
        except (TypeError, ValueError) as e:
            raise FormatError(f"bad config: {e}") from e

    @staticmethod
    def load(path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            return ExperimentConfig.from_json(f.read())
