"""Run configuration dataclasses and their JSON round trip."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .curation import StopRule
from .data import GenConfig
from .errors import ConfigError


@dataclass
class EncoderConfig:
    hidden: int = 32
    embed_dim: int = 16

    def __post_init__(self):
        if min(self.hidden, self.embed_dim) <= 0:
            raise ConfigError("encoder dims must be positive")


@dataclass
class TeacherConfig:
    """Clean pretraining that stands in for an off-the-shelf encoder pair."""

    n_pairs: int = 2000
    steps: int = 600
    batch_size: int = 128
    queue_capacity: int = 256

    def __post_init__(self):
        if min(self.n_pairs, self.steps, self.batch_size, self.queue_capacity) <= 0:
            raise ConfigError("teacher settings must be positive")


@dataclass
class DistillConfig:
    corpus_size: int = 4096
    held_out: int = 512
    steps: int = 2000
    batch_size: int = 256
    base_lr: float = 0.05
    target_mse: float = 0.05

    def __post_init__(self):
        if min(self.corpus_size, self.held_out, self.steps, self.batch_size) <= 0:
            raise ConfigError("distillation settings must be positive")


@dataclass
class TrainConfig:
    """Main pretraining loop settings."""

    tau: float = 0.07
    alpha: float = 0.9
    keep_fraction: float = 0.9
    queue_capacity: int = 2048
    batch_pairs: int = 180
    batch_text: int = 40
    base_lr: float = 5e-3
    weight_decay: float = 1e-4
    warmup_frac: float = 0.05
    epochs: int = 14
    p_mask: float = 0.15
    p_replace: float = 0.20
    step_budget: int | None = None  # when set, stop after exactly this many steps
    filter_epochs_max: int | None = None  # cap on filtering epochs, None = stop rule only

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not 0 <= self.alpha < 1:
            raise ConfigError("alpha must be in [0, 1)")
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError("keep_fraction must be in (0, 1]")
        if min(self.queue_capacity, self.batch_pairs, self.epochs) <= 0:
            raise ConfigError("queue, batch and epoch settings must be positive")
        if self.batch_text < 0:
            raise ConfigError("batch_text must be >= 0")


@dataclass
class RunConfig:
    """Everything one pretraining run needs, serialized verbatim for provenance."""

    data: GenConfig = field(default_factory=lambda: GenConfig(n_pairs=10000))
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    stop: StopRule = field(default_factory=StopRule)
    filtering_on: bool = True  # score/rank/prune loop
    mlm_on: bool = True  # masked-token co-training while filtering
    shadow_refresh_on: bool = True  # refresh the scoring shadow each epoch
    n_val: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n_val < 0:
            raise ConfigError("n_val must be >= 0")

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy of this config rebased onto another master seed."""
        cfg = from_dict(to_dict(self))
        cfg.seed = seed
        cfg.data.seed = seed
        cfg.data.world_seed = seed
        return cfg

    def run_id(self) -> str:
        digest = hashlib.sha256(to_json(self).encode()).hexdigest()[:12]
        return f"run-{digest}"


_SECTIONS = {
    "data": GenConfig,
    "encoder": EncoderConfig,
    "teacher": TeacherConfig,
    "distill": DistillConfig,
    "train": TrainConfig,
    "stop": StopRule,
}


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def from_dict(payload: dict) -> RunConfig:
    kwargs = {}
    for key, value in payload.items():
        if key in _SECTIONS:
            kwargs[key] = _SECTIONS[key](**value)
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def to_json(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True)


def load_config(path: str | Path) -> RunConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return from_dict(payload)


def save_config(path: str | Path, cfg: RunConfig) -> None:
    Path(path).write_text(to_json(cfg) + "\n")


def apply_override(cfg: RunConfig, dotted: str, raw: str) -> RunConfig:
    """Set one config field from a "section.field=value" CLI override."""
    parts = dotted.split(".")
    target = cfg
    for name in parts[:-1]:
        if not hasattr(target, name):
            raise ConfigError(f"unknown config section {name!r}")
        target = getattr(target, name)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"unknown config field {dotted!r}")
    current = getattr(target, leaf)
    value: object
    if raw in ("null", "none", "None"):
        value = None
    elif isinstance(current, bool):
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ConfigError(f"{dotted}: expected a boolean, got {raw!r}")
        value = raw.lower() in ("true", "1")
    elif isinstance(current, int) and not isinstance(current, bool):
        value = int(raw)
    elif isinstance(current, float):
        value = float(raw)
    elif current is None:
        value = int(raw)  # only step_budget/world_seed are optional ints
    else:
        value = raw
    setattr(target, leaf, value)
    # Re-run validation by round-tripping the dataclass tree.
    return from_dict(to_dict(cfg))
