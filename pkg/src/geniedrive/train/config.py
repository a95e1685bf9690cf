"""Training configuration with strict construction from plain dicts."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class ConfigError(ValueError):
    """Raised for unknown keys, missing values, or invalid settings."""


class Phase(Enum):
    VAE = "VAE"
    PREDICTOR = "PREDICTOR"
    E2E = "E2E"


def dataclass_from_dict(cls, data: dict[str, Any]):
    """Build a (possibly nested) dataclass, rejecting unknown keys."""
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"{cls} is not a dataclass")
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        target = _resolve(cls, ftype)
        if dataclasses.is_dataclass(target) and isinstance(value, dict):
            kwargs[name] = dataclass_from_dict(target, value)
        elif isinstance(target, type) and issubclass(target, Enum):
            kwargs[name] = target(value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value) if _wants_tuple(ftype) else value
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {cls.__name__}: {e}") from e


def _resolve(owner, ftype):
    if isinstance(ftype, str):
        import builtins
        import sys

        module = sys.modules[owner.__module__]
        return getattr(module, ftype, None) or getattr(builtins, ftype, None)
    return ftype


def _wants_tuple(ftype) -> bool:
    text = ftype if isinstance(ftype, str) else str(ftype)
    return "tuple" in text or "Tuple" in text


@dataclass
class ModelConfig:
    """Shared model hyperparameters; latent dims derive from the dataset."""

    channels: int = 32
    downsample: int = 4
    axis_layers: int = 2
    heads: int = 4
    mca_layers: int = 4
    intermediate_layer: int = 2
    st_blocks: int = 2
    history: int = 3


@dataclass
class TrainConfig:
    phase: Phase = Phase.VAE
    epochs: int = 100
    batch_size: int = 16
    lr: float = 2e-3
    cosine_schedule: bool = True
    kl_weight: float = 1e-6
    reg_weight: float = 0.1          # lambda on the transform-head loss
    betas: tuple = (1.0,)            # per-step beta_t, broadcast past the end
    dropout: float = 0.0
    forecast_steps: int = 4          # N during predictor / E2E training
    seed: int = 0
    eval_every: int = 10
    dataset: str = ""
    val_dataset: str = ""
    checkpoint: str = ""
    init_vae: str = ""               # PREDICTOR / E2E phases: VAE to start from
    init_predictor: str = ""         # E2E phase: predictor to start from
    log_path: str = ""
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs <= 0:
            raise ConfigError("epochs must be positive")
        if self.reg_weight < 0:
            raise ConfigError("reg_weight must be >= 0")
        if self.forecast_steps < 1:
            raise ConfigError("forecast_steps must be >= 1")
