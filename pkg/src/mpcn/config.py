"""Hyperparameters, ablation switches and the key = value config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError

AGGREGATIONS = ("concat", "additive", "neural")


@dataclass
class MpcnConfig:
    d: int = 50
    n_pointers: int = 3
    layers: int = 1
    aggregation: str = "neural"
    use_gates: bool = True
    use_fm: bool = True
    use_word_coattention: bool = True
    use_review_coattention: bool = True
    fm_factors: int = 10
    tau: float = 1.0
    dropout: float = 0.2
    precision: int = 32

    def validate(self) -> "MpcnConfig":
        if self.d < 1 or self.fm_factors < 1:
            raise ConfigError("dimensions must be positive")
        if self.n_pointers < 1:
            raise ConfigError(f"n_pointers must be >= 1, got {self.n_pointers}")
        if self.layers not in (0, 1, 2):
            raise ConfigError(f"layers must be 0, 1 or 2, got {self.layers}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")
        return self

    @property
    def dtype(self):
        return np.float64 if self.precision == 64 else np.float32


@dataclass
class BaselineConfig:
    d: int = 50
    fm_factors: int = 10
    mf_bias: bool = True
    dropout: float = 0.2
    precision: int = 32

    def validate(self) -> "BaselineConfig":
        if self.d < 2 or self.fm_factors < 1:
            raise ConfigError("dimensions must be positive (d >= 2)")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")
        return self

    @property
    def dtype(self):
        return np.float64 if self.precision == 64 else np.float32


@dataclass
class TrainConfig:
    lr: float = 1e-3
    max_epochs: int = 20
    patience: int = 5
    l2: float = 1e-6
    batch_size: int = 128
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_exclude: tuple[str, ...] = ()
    record_wall_time: bool = True

    def validate(self) -> "TrainConfig":
        if not (self.lr > 0 and self.max_epochs > 0 and self.patience > 0 and self.batch_size > 0):
            raise ConfigError("lr, max_epochs, patience and batch_size must be positive")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")
        if self.patience > self.max_epochs:
            raise ConfigError("patience cannot exceed max_epochs")
        return self


@dataclass
class ExperimentConfig:
    """Everything a run needs; field names double as config-file keys."""

    model: str = "mpcn"
    seed: int = 0
    # model
    d: int = 50
    n_pointers: int = 3
    layers: int = 1
    aggregation: str = "neural"
    use_gates: bool = True
    use_fm: bool = True
    use_word_coattention: bool = True
    use_review_coattention: bool = True
    fm_factors: int = 10
    tau: float = 1.0
    dropout: float = 0.2
    precision: int = 32
    mf_bias: bool = True
    # training
    lr: float = 1e-3
    max_epochs: int = 20
    patience: int = 5
    l2: float = 1e-6
    batch_size: int = 128
    record_wall_time: bool = True
    # analysis
    sample_size: int = 1000
    extra: dict = field(default_factory=dict, repr=False)

    def mpcn(self) -> MpcnConfig:
        return _project(self, MpcnConfig).validate()

    def baseline(self) -> BaselineConfig:
        return _project(self, BaselineConfig).validate()

    def train(self) -> TrainConfig:
        return _project(self, TrainConfig).validate()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        return d


def _project(src, cls):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in dataclasses.asdict(src).items() if k in names})


def _coerce(text: str, typ):
    if typ in (bool, "bool"):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if typ in (int, "int"):
        return int(text)
    if typ in (float, "float"):
        return float(text)
    return text.strip()


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key = value`` lines (``#`` comments allowed) on top of ``base``."""
    cfg = dataclasses.replace(base) if base else ExperimentConfig()
    types = {f.name: f.type for f in fields(ExperimentConfig) if f.name != "extra"}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _coerce(value, types[key]))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
