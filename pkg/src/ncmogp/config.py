"""Experiment configuration (TOML) with strict validation.

Example::

    seed = 0

    [data]
    source = "toy"            # or a CSV path

    [model]
    order = 3
    variant = "homogeneous"

    [optimizer]
    restarts = 5

    [split]
    policy = "random"          # or "ranges"
    n_train = 50

    [split.missing_ranges]     # policy = "ranges": held-out x1 intervals
    Cambermet = [[3.2, 4.1]]
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .model import VARIANTS


@dataclass
class ModelSection:
    order: int = 1
    variant: str = "homogeneous"


@dataclass
class InitSection:
    sensitivity: list | None = None
    lengthscale: list | None = None
    latent_lengthscale: list | None = None
    noise_var: list | None = None


@dataclass
class OptimizerSection:
    restarts: int = 5
    max_iter: int = 1000
    gtol: float = 1e-6


@dataclass
class SplitSection:
    policy: str = "random"
    n_train: int | None = 50
    train_fraction: float | None = None
    missing_ranges: dict = field(default_factory=dict)


@dataclass
class DataSection:
    source: str = "toy"
    noise_scale: float = 0.005
    n_points: int = 200


@dataclass
class EvalSection:
    resplits: int = 1


@dataclass
class ExperimentConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    init: InitSection = field(default_factory=InitSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    split: SplitSection = field(default_factory=SplitSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {
    "data": DataSection,
    "model": ModelSection,
    "init": InitSection,
    "optimizer": OptimizerSection,
    "split": SplitSection,
    "eval": EvalSection,
}


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    return cls(**raw)


def from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    unknown = sorted(set(raw) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {name: _build(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(seed=raw.get("seed", 0), **kwargs)
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(raw)


def _positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def validate(cfg: ExperimentConfig) -> None:
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    _positive_int(cfg.model.order, "model.order")
    if cfg.model.variant not in VARIANTS:
        raise ConfigError(f"model.variant must be one of {VARIANTS}")
    _positive_int(cfg.optimizer.restarts, "optimizer.restarts")
    _positive_int(cfg.optimizer.max_iter, "optimizer.max_iter")
    if not cfg.optimizer.gtol > 0:
        raise ConfigError("optimizer.gtol must be positive")
    _positive_int(cfg.eval.resplits, "eval.resplits")
    _positive_int(cfg.data.n_points, "data.n_points")
    if cfg.data.noise_scale < 0:
        raise ConfigError("data.noise_scale must be non-negative")
    s = cfg.split
    if s.policy not in ("random", "ranges"):
        raise ConfigError("split.policy must be 'random' or 'ranges'")
    if s.policy == "random":
        if s.train_fraction is not None:
            if not 0 < s.train_fraction < 1:
                raise ConfigError("split.train_fraction must lie in (0, 1)")
        elif s.n_train is None:
            raise ConfigError("random split needs n_train or train_fraction")
        else:
            _positive_int(s.n_train, "split.n_train")
    else:
        if not s.missing_ranges:
            raise ConfigError("split.policy = 'ranges' needs [split.missing_ranges]")
        for name, ranges in s.missing_ranges.items():
            ok = isinstance(ranges, list) and all(
                isinstance(r, list) and len(r) == 2 and r[0] <= r[1] for r in ranges
            )
            if not ok:
                raise ConfigError(f"missing_ranges.{name} must be a list of [lo, hi] pairs")
