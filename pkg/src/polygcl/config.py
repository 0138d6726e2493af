"""Flat key=value experiment configuration with dotted keys.

A config file is plain text, one "key = value" per line, '#' comments;
every key can also be overridden on the command line. The resolved map is
echoed verbatim into every JSON artifact a command writes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .augment import AugmentConfig
from .model import ModelConfig
from .objectives import LossConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Bad key, bad value, or unusable combination of settings."""


@dataclass(frozen=True)
class KeySpec:
    kind: str  # int | float | str | bool
    default: object
    help: str


SCHEMA: dict[str, KeySpec] = {
    "dataset.path": KeySpec("str", "", "canonical JSON graph file"),
    "dataset.format": KeySpec("str", "canonical", "canonical | raw"),
    "dataset.content": KeySpec("str", "", "raw content file (dataset.format=raw)"),
    "dataset.cites": KeySpec("str", "", "raw cites file (dataset.format=raw)"),
    "dataset.feature_normalize": KeySpec("bool", False, "divide feature rows by their sum"),
    "seed": KeySpec("int", 0, "master seed; subsystems derive their own streams"),
    "out.dir": KeySpec("str", "runs/latest", "artifact output directory"),
    "train.epochs": KeySpec("int", 200, "pre-training epochs"),
    "train.lr": KeySpec("float", 1e-3, "Adam learning rate"),
    "train.weight_decay": KeySpec("float", 5e-4, "L2 coupling added to gradients"),
    "train.beta1": KeySpec("float", 0.9, "Adam beta1"),
    "train.beta2": KeySpec("float", 0.999, "Adam beta2"),
    "train.eps": KeySpec("float", 1e-8, "Adam epsilon"),
    "train.grad_clip": KeySpec("float", 0.0, "global-norm gradient clip; 0 disables"),
    "train.decoupled_weight_decay": KeySpec("bool", False, "decoupled instead of L2-coupled"),
    "model.hidden": KeySpec("int", 64, "hidden dimension"),
    "model.out": KeySpec("int", 128, "embedding dimension"),
    "model.activation": KeySpec("str", "square", "square | relu"),
    "model.square_scale": KeySpec("float", 1.0, "scale after squaring (0.5 tames divergence)"),
    "loss.kind": KeySpec("str", "poly", "poly | grace"),
    "loss.margin": KeySpec("float", 0.5, "margin m of the polynomial objective"),
    "loss.lambda": KeySpec("float", 1e-2, "embedding-magnitude regularization weight"),
    "loss.temperature": KeySpec("float", 0.4, "baseline softmax temperature"),
    "augment.edge_drop_1": KeySpec("float", 0.3, "edge drop probability, view 1"),
    "augment.edge_drop_2": KeySpec("float", 0.3, "edge drop probability, view 2"),
    "augment.feat_mask_1": KeySpec("float", 0.3, "feature column mask probability, view 1"),
    "augment.feat_mask_2": KeySpec("float", 0.3, "feature column mask probability, view 2"),
    "probe.lr": KeySpec("float", 0.01, "probe Adam learning rate"),
    "probe.epochs": KeySpec("int", 300, "probe training epochs"),
    "probe.weight_decay": KeySpec("float", 1e-4, "probe L2 weight decay"),
    "probe.standardize": KeySpec("bool", False, "standardize embedding columns before probing"),
}


def parse_value(key: str, raw: str) -> object:
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    kind = SCHEMA[key].kind
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {err}") from err


def load_config_file(path: str | Path) -> dict[str, object]:
    values: dict[str, object] = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            try:
                values[key] = parse_value(key, raw)
            except ConfigError as err:
                raise ConfigError(f"{path}:{lineno}: {err}") from err
    return values


@dataclass
class ExperimentConfig:
    """Fully resolved configuration; `values` is the flat echo-able map."""

    values: dict[str, object]

    @classmethod
    def resolve(cls, file_values: dict[str, object] | None = None,
                overrides: dict[str, object] | None = None) -> "ExperimentConfig":
        values = {key: spec.default for key, spec in SCHEMA.items()}
        for layer in (file_values, overrides):
            if layer:
                for key, val in layer.items():
                    if key not in SCHEMA:
                        raise ConfigError(f"unknown config key {key!r}")
                    values[key] = val
        return cls(values=values)

    def __getitem__(self, key: str) -> object:
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(str(self.values["out.dir"]))

    def echo(self) -> dict[str, object]:
        return dict(sorted(self.values.items()))

    def train_config(self) -> TrainConfig:
        v = self.values
        try:
            model = ModelConfig(
                hidden=int(v["model.hidden"]),
                out_dim=int(v["model.out"]),
                activation=str(v["model.activation"]),
                square_scale=float(v["model.square_scale"]),
            )
            loss = LossConfig(
                kind=str(v["loss.kind"]),
                margin=float(v["loss.margin"]),
                lam=float(v["loss.lambda"]),
                temperature=float(v["loss.temperature"]),
            )
            augment = AugmentConfig(
                edge_drop_1=float(v["augment.edge_drop_1"]),
                edge_drop_2=float(v["augment.edge_drop_2"]),
                feat_mask_1=float(v["augment.feat_mask_1"]),
                feat_mask_2=float(v["augment.feat_mask_2"]),
            )
            grad_clip = float(v["train.grad_clip"])
            return TrainConfig(
                epochs=int(v["train.epochs"]),
                lr=float(v["train.lr"]),
                weight_decay=float(v["train.weight_decay"]),
                beta1=float(v["train.beta1"]),
                beta2=float(v["train.beta2"]),
                eps=float(v["train.eps"]),
                seed=self.seed,
                decoupled_weight_decay=bool(v["train.decoupled_weight_decay"]),
                grad_clip=grad_clip if grad_clip > 0.0 else None,
                model=model,
                loss=loss,
                augment=augment,
            )
        except ValueError as err:
            raise ConfigError(str(err)) from err
