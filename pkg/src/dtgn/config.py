"""Run configuration: a JSON document with sections data, model, training,
eval and seed.

Precedence is defaults < config file < command-line flags; the environment
variable ``DTGN_SEED`` overrides the seed from the file. Unknown keys are
rejected at every level. The resolved document is written next to outputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .training import LossSchedule, TrainConfig

SEED_ENV = "DTGN_SEED"


@dataclass
class DataSection:
    count: int = 512
    frames: int = 8
    size: int = 32
    ef_range: tuple[float, float] = (0.1, 0.9)
    glyph_count: int = 2000
    perturbations: int = 8
    glyph_size: int = 16


@dataclass
class ModelSection:
    generator_channels: tuple[int, ...] = (16, 32)
    generator_skip: bool = True
    expert_channels: tuple[int, ...] = (8, 16, 32, 32)
    disc_channels: tuple[int, ...] = (8, 16, 16, 32, 32)
    video_discriminator: bool = False
    codebook_size: int = 64
    code_dim: int = 8
    vq_hidden: int = 32
    embedding_hidden: int = 128


@dataclass
class StageSection:
    """Per-stage optimisation settings; the rest of :class:`TrainConfig`
    comes from the data and model sections."""

    epochs: int = 12
    batch_size: int = 8
    lr_generator: float = 1e-4
    lr_discriminator: float = 1e-4
    lr_expert: float = 1e-3
    noise_variance: float = 0.25
    disc_frames: int = 2


@dataclass
class TrainingSection:
    expert: StageSection = field(default_factory=lambda: StageSection(epochs=12))
    vq: StageSection = field(default_factory=lambda: StageSection(epochs=3, batch_size=64, lr_generator=2e-3))
    twin_supervised: StageSection = field(
        default_factory=lambda: StageSection(epochs=30, batch_size=32, lr_generator=1e-3))
    twin: StageSection = field(default_factory=lambda: StageSection(epochs=12, lr_generator=1e-3,
                                                                    lr_discriminator=2e-5))
    schedule: LossSchedule = field(default_factory=LossSchedule)
    no_adversarial: bool = False
    no_expert: bool = False
    conditional_only: bool = False


@dataclass
class EvalSection:
    n: int = 100
    items: int = 32
    sweep: tuple[float, ...] = (0.2, 0.35, 0.5, 0.65, 0.8)
    glyph_n: int = 100


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    eval: EvalSection = field(default_factory=EvalSection)
    seed: int = 0

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def train_config(self, stage: str) -> TrainConfig:
        st: StageSection = getattr(self.training, stage.replace("-", "_"))
        return TrainConfig(
            epochs=st.epochs, batch_size=st.batch_size, lr_generator=st.lr_generator,
            lr_discriminator=st.lr_discriminator, lr_expert=st.lr_expert, seed=self.seed,
            resolution=self.data.size, frames=self.data.frames, no_adversarial=self.training.no_adversarial,
            no_expert=self.training.no_expert, conditional_only=self.training.conditional_only,
            noise_variance=st.noise_variance, disc_frames=st.disc_frames,
            video_discriminator=self.model.video_discriminator,
            generator_channels=tuple(self.model.generator_channels), generator_skip=self.model.generator_skip,
            expert_channels=tuple(self.model.expert_channels), disc_channels=tuple(self.model.disc_channels),
            schedule=self.training.schedule)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _check_scalar(path: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty list, got {value!r}")
        return tuple(_check_scalar(f"{path}[{i}]", default[0], v) for i, v in enumerate(value))
    return value


def _merge(obj, updates: dict, path: str):
    """Return a copy of dataclass ``obj`` with ``updates`` applied recursively."""
    if not isinstance(updates, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(updates).__name__}")
    known = {f.name for f in fields(obj)}
    unknown = sorted(set(updates) - known)
    if unknown:
        raise ConfigError(f"unknown config keys at {path or 'top level'}: {unknown}")
    kwargs: dict[str, Any] = {}
    for f in fields(obj):
        current = getattr(obj, f.name)
        key = f"{path}.{f.name}" if path else f.name
        if f.name not in updates:
            kwargs[f.name] = current
        elif is_dataclass(current):
            kwargs[f.name] = _merge(current, updates[f.name], key)
        else:
            kwargs[f.name] = _check_scalar(key, current, updates[f.name])
    try:
        return type(obj)(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def _validate(cfg: RunConfig) -> None:
    d = cfg.data
    if d.count < 1 or d.glyph_count < 1:
        raise ConfigError("data counts must be >= 1")
    if d.frames < 8:
        raise ConfigError("data.frames must be >= 8")
    if d.size % 4 or d.size < 8:
        raise ConfigError("data.size must be a multiple of 4, at least 8")
    if d.perturbations < 2:
        raise ConfigError("data.perturbations must be >= 2")
    if not 0.05 < d.ef_range[0] < d.ef_range[1] < 0.95 or len(d.ef_range) != 2:
        raise ConfigError("data.ef_range must be an increasing pair inside (0.05, 0.95)")
    if min(cfg.eval.n, cfg.eval.items, cfg.eval.glyph_n) < 1:
        raise ConfigError("eval.n, eval.items and eval.glyph_n must be >= 1")
    for name in ("expert", "vq", "twin_supervised", "twin"):
        st: StageSection = getattr(cfg.training, name)
        if min(st.epochs, st.batch_size, st.disc_frames) <= 0:
            raise ConfigError(f"training.{name}: epochs, batch_size and disc_frames must be positive")
        if min(st.lr_generator, st.lr_discriminator, st.lr_expert, st.noise_variance) <= 0:
            raise ConfigError(f"training.{name}: rates and noise variance must be positive")


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                env: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        cfg = _merge(cfg, doc, "")
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg = _merge(cfg, {"seed": int(env[SEED_ENV])}, "")
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    if overrides:
        cfg = _merge(cfg, overrides, "")
    _validate(cfg)
    return cfg


def write_resolved(cfg: RunConfig, out_dir: str | Path, name: str = "config.resolved.json") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
