"""Experiment configuration and its YAML file format.

A config file is a YAML mapping; ``schema_version`` is mandatory. Every
other key is optional and falls back to the defaults below. Example::

    schema_version: 1
    name: shallow-and-deep
    fusion_stages: [1, 4]
    consistency: {loss_type: cosine, alpha: 0.01, active_stages: [1, 2, 3]}
    optimizer: {epochs: 30, batch_size: 8, lr: 0.001, lr_min: 0.00001}
    dataset: {n_train: 200, n_val: 50, seed: 0}
    seeds: [0, 1, 2, 3, 4]

``consistency: null`` (the default) disables the regularizer.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..backbones import BackboneSpec
from ..consistency import ConsistencyConfig
from ..errors import ConfigError
from ..scene import DatasetSpec

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    lr_min: float = 1e-5
    epochs: int = 30
    batch_size: int = 8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not (self.lr > 0 and 0 <= self.lr_min <= self.lr):
            raise ConfigError("need lr > 0 and 0 <= lr_min <= lr")

    def lr_at(self, step: int, total: int) -> float:
        """Cosine decay from ``lr`` to ``lr_min`` over ``total`` steps."""
        if total <= 1:
            return self.lr
        frac = step / (total - 1)
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1 + math.cos(math.pi * frac))


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "default"
    modality: str = "fusion"  # or "lidar": no camera branch is built at all
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    fusion_stages: tuple = (1,)
    fusion_mode: str = "sum"
    query: str = "nearest"
    consistency: ConsistencyConfig | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seeds: tuple = (0, 1, 2, 3, 4)
    data_dir: str | None = None
    log_cons_grad: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fusion_stages", tuple(sorted({int(t) for t in self.fusion_stages})))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        if self.modality not in ("fusion", "lidar"):
            raise ConfigError(f"unknown modality {self.modality!r}")
        n = self.backbone.n_stages
        if any(not 1 <= t <= n for t in self.fusion_stages):
            raise ConfigError(f"fusion stages must lie in 1..{n}")
        if self.modality == "lidar" and (self.fusion_stages or self.consistency is not None):
            raise ConfigError("a lidar-only config can not fuse or use consistency")
        if self.fusion_mode not in ("sum", "concat"):
            raise ConfigError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.query not in ("nearest", "bilinear"):
            raise ConfigError(f"unknown query mode {self.query!r}")
        if self.consistency is not None:
            self.consistency.check(n)
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        grid_dims = self.dataset.grid_dims
        if any(d % 2 ** n for d in grid_dims) or any(d % 2 ** n for d in self.dataset.image_size):
            raise ConfigError(f"grid and image sizes must be divisible by 2**{n}")

    @property
    def uses_consistency(self) -> bool:
        """True when the consistency graph contributes to the objective."""
        return self.consistency is not None and self.consistency.alpha > 0

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (stable key order, exact floats)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if "schema_version" not in data:
        raise ConfigError("schema_version is mandatory")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = dict(data)
    kw["dataset"] = _build(DatasetSpec, data.get("dataset"), "dataset")
    kw["backbone"] = _build(BackboneSpec, data.get("backbone"), "backbone")
    kw["optimizer"] = _build(OptimizerConfig, data.get("optimizer"), "optimizer")
    cons = data.get("consistency")
    kw["consistency"] = None if cons is None else _build(ConsistencyConfig, cons, "consistency")
    for key in ("fusion_stages", "seeds"):
        if key in kw and isinstance(kw[key], list):
            kw[key] = tuple(kw[key])
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def dumps_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return loads_config(path.read_text(encoding="utf-8"))


def save_config(path, cfg: ExperimentConfig) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")
