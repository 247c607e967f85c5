"""Run configuration: TOML file with ``[model]``, ``[optim]``, ``[data]``,
``[eval]`` and ``[run]`` sections. Every key has a default; unknown keys are
errors so typos surface immediately."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from ..model import ModelConfig
from ..ops import ConfigError


@dataclass
class OptimConfig:
    name: str = "adamax"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_factor: float = 0.1
    decay_every_epochs: int = 30
    total_epochs: int = 70
    max_iterations: int = 0  # 0 = run all epochs

    def lr_at(self, epoch: int) -> float:
        """Step schedule; ``epoch`` is 0-based."""
        return self.lr * self.decay_factor ** (epoch // self.decay_every_epochs)


@dataclass
class DataConfig:
    batch_size: int = 10
    patch_height: int = 64
    patch_width: int = 112
    augment: bool = True
    root: str = ""  # empty -> synthetic data
    synth_count: int = 64
    synth_height: int = 64
    synth_width: int = 64
    synth_seed: int = 0


@dataclass
class EvalConfig:
    channel_mode: str = "rgb"


@dataclass
class RunSection:
    seed: int = 0
    keep_checkpoints: int = 0  # 0 = keep every epoch
    dtype: str = "float32"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> "RunConfig":
        self.model.validate()
        if self.optim.name != "adamax":
            raise ConfigError(f"unsupported optimizer {self.optim.name!r}")
        if self.optim.lr <= 0 or self.optim.decay_every_epochs < 1 or self.optim.total_epochs < 1:
            raise ConfigError("lr, decay_every_epochs and total_epochs must be positive")
        if self.data.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        for name in ("patch_height", "patch_width", "synth_height", "synth_width"):
            if getattr(self.data, name) % 4 or getattr(self.data, name) <= 0:
                raise ConfigError(f"data.{name} must be a positive multiple of 4")
        if self.eval.channel_mode not in ("rgb", "luma601"):
            raise ConfigError(f"unknown channel_mode {self.eval.channel_mode!r}")
        if self.run.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.run.dtype!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, **flat) -> "RunConfig":
        """Copy with ``section.key`` style overrides, e.g. ``{"optim.lr": 1e-3}``."""
        data = self.to_dict()
        for key, value in flat.items():
            section, _, name = key.partition(".")
            data.setdefault(section, {})[name] = value
        return from_dict(data)


_SECTIONS = {
    "model": ModelConfig,
    "optim": OptimConfig,
    "data": DataConfig,
    "eval": EvalConfig,
    "run": RunSection,
}


def _build(cls, values: dict, section: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {section}.{key}")
        default = known[key].default
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be a boolean")
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, type(default)):
            raise ConfigError(
                f"{section}.{key} must be {type(default).__name__}, got {type(value).__name__}"
            )
        kwargs[key] = value
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    sections = {}
    for key, values in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {key!r} must be a table")
        sections[key] = _build(_SECTIONS[key], values, key)
    return RunConfig(**sections).validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    """Serialise as TOML (flat sections, scalar values only)."""
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, str):
                text = '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
            else:
                text = repr(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)
