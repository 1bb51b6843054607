"""Run configuration: nested dataclasses loaded from one JSON document.

Unknown keys are rejected at every level so that typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

from .losses import LossWeights
from .networks import CriticConfig, GeneratorConfig


class ConfigError(ValueError):
    pass


@dataclass
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9


@dataclass
class SyntheticConfig:
    template_count: int = 2
    n: int = 5
    noise: float = 0.05
    size: int = 4096
    seed: int = 0


@dataclass
class DataConfig:
    # a directory / multi-frame XYZ / tar archive; mutually exclusive with `synthetic`
    path: str | None = None
    formula: str | None = None
    synthetic: SyntheticConfig | None = None
    split_fraction: float = 0.5
    split_seed: int = 0


@dataclass
class EvalConfig:
    cutoff: float = 0.6
    bins: int = 100
    range: list[float] = field(default_factory=lambda: [0.0, 10.0])
    proper: bool = False


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 64
    n_critic: int = 5
    steps: int = 20000
    checkpoint_interval: int = 1000
    out_dir: str = "runs/default"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # r_min = null means "minimal pairwise distance of the dataset"
    weights: LossWeights = field(default_factory=lambda: LossWeights(r_min=None))
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    data: DataConfig = field(default_factory=DataConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.n_critic < 1:
            raise ConfigError("n_critic must be at least 1")
        if self.steps < 0:
            raise ConfigError("steps must be non-negative")


def _build(cls, doc: Any, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        sub = _nested_class(hints[key])
        if sub is not None and value is not None:
            value = _build(sub, value, f"{where}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _nested_class(hint):
    if dataclasses.is_dataclass(hint):
        return hint
    for arg in getattr(hint, "__args__", ()):
        if dataclasses.is_dataclass(arg):
            return arg
    return None


def config_from_dict(doc: dict) -> TrainConfig:
    cfg = _build(TrainConfig, doc, "config")
    if "weights" in doc and "r_min" not in doc["weights"]:
        cfg.weights.r_min = None
    return cfg


def load_config(path) -> TrainConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
