"""Configuration models, presets and layered loading.

Precedence, lowest first: preset defaults, flat ``section.key = value`` file,
``CHAINVQA_<SECTION>_<KEY>`` environment variables, ``--set`` CLI overrides.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

ENV_PREFIX = "CHAINVQA_"


def _read_bool(value: str | None, default: bool) -> bool:
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


def _cast_value(value: str, default: Any) -> Any:
    """Cast a raw string to the type of ``default``."""

    if isinstance(default, bool):
        return _read_bool(value, default)
    if isinstance(default, int):
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"Expected an integer, got {value!r}") from exc
    if isinstance(default, float):
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"Expected a number, got {value!r}") from exc
    if isinstance(default, list):
        return [item.strip() for item in value.split(",") if item.strip()]
    if default is None:
        lowered = value.strip().lower()
        if lowered in {"", "none", "null"}:
            return None
        try:
            return float(value)
        except ValueError:
            return value
    return value


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class NumericConfig(_Section):
    """Adamax constants and the parameter-init seed."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    init_seed: int = 0


class LrSchedule(_Section):
    """Warm-up then step-decay learning-rate schedule, indexed by epoch."""

    base_lr: float = 5e-4
    peak_lr: float = 2e-3
    warmup_epochs: int = 4
    decay_start: int = 14
    decay_every: int = 2
    decay_factor: float = 0.2
    max_epoch: int = 18

    @model_validator(mode="after")
    def _check(self) -> "LrSchedule":
        if self.warmup_epochs < 0 or self.decay_every < 1:
            raise ValueError("warmup_epochs must be >= 0 and decay_every >= 1")
        if not self.warmup_epochs <= self.decay_start <= self.max_epoch:
            raise ValueError("need warmup_epochs <= decay_start <= max_epoch")
        return self


class GvrConfig(_Section):
    """Widths and sparsity of the graph visual reasoning kernel."""

    d_q: int = 64
    d_v: int = 64
    heads: int = 4
    k: int = 5
    geometry_eps: float = 1e-3
    wave_base: float = 1000.0

    @model_validator(mode="after")
    def _check(self) -> "GvrConfig":
        if self.d_q % self.heads:
            raise ValueError(f"d_q={self.d_q} is not divisible by heads={self.heads}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.geometry_eps <= 0:
            raise ValueError("geometry_eps must be positive")
        return self

    @property
    def d_h(self) -> int:
        return self.d_q // self.heads


class EncoderConfig(_Section):
    """Bidirectional transformer question encoder."""

    layers: int = 2
    heads: int = 4
    ffn: int = 128
    max_len: int = 14
    fixed_lr: float | None = None


class AnswererConfig(_Section):
    classifier_hidden: int = 128
    sub_hidden: int = 64
    att_hidden: int = 64
    dropout: float = 0.2
    classifier_dropout: float = 0.5
    use_sub_loss: bool = True


class QuestionerConfig(_Section):
    embed_dim: int = 32
    hidden: int = 64
    att_hidden: int = 64
    max_rounds: int = 4
    max_len: int = 14
    beam_width: int = 1
    dropout: float = 0.2

    @property
    def session_dim(self) -> int:
        # GRU_Q and GRU_s are as wide as [q_fea || a_emb]
        return self.hidden + self.embed_dim


class OracleConfig(_Section):
    """Learned yes/no oracle: multi-glimpse top-down attention plus a soft count path."""

    embed_dim: int = 32
    hidden: int = 64
    att_hidden: int = 64
    glimpses: int = 2
    count_bins: int = 6
    dropout: float = 0.1
    classifier_dropout: float = 0.2
    epochs: int = 18

    @model_validator(mode="after")
    def _check(self) -> "OracleConfig":
        if self.glimpses < 1 or self.count_bins < 0 or self.epochs < 1:
            raise ValueError("need glimpses >= 1, count_bins >= 0 and epochs >= 1")
        return self


class SyntheticConfig(_Section):
    """Closed-world scene generator settings."""

    labels: list[str] = Field(
        default_factory=lambda: ["dog", "cat", "cup", "table", "vase", "flower", "ball", "car"]
    )
    colors: list[str] = Field(default_factory=lambda: ["red", "blue", "green", "yellow"])
    sizes: list[str] = Field(default_factory=lambda: ["small", "large"])
    min_objects: int = 3
    max_objects: int = 8
    canvas_width: float = 100.0
    canvas_height: float = 100.0
    feature_width: int = 32
    stack_prob: float = 0.3
    questions_per_scene: int = 8
    scenes: int = 500
    train_scenes: int = 400
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "SyntheticConfig":
        if not self.labels:
            raise ValueError("labels must not be empty")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("need 1 <= min_objects <= max_objects")
        needed = len(self.labels) + len(self.colors) + len(self.sizes) + 4
        if self.feature_width < needed:
            raise ValueError(f"feature_width must be >= {needed}")
        if not 0 <= self.train_scenes <= self.scenes:
            raise ValueError("train_scenes must lie in [0, scenes]")
        return self


class TrainConfig(_Section):
    epochs: int = 10
    batch_size: int = 32
    patience: int = 3
    val_fraction: float = 0.1
    seed: int = 0
    sqs_source: str = "generated"

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.sqs_source not in {"generated", "gold"}:
            raise ValueError("sqs_source must be 'generated' or 'gold'")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        return self


class SqsConfig(_Section):
    overlap_threshold: float = 0.5
    max_sqs: int = 4


class RunConfig(_Section):
    """Root configuration for every command."""

    preset: str = "desk"
    numeric: NumericConfig = Field(default_factory=NumericConfig)
    schedule: LrSchedule = Field(default_factory=LrSchedule)
    gvr: GvrConfig = Field(default_factory=GvrConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    answerer: AnswererConfig = Field(default_factory=AnswererConfig)
    questioner: QuestionerConfig = Field(default_factory=QuestionerConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sqs: SqsConfig = Field(default_factory=SqsConfig)

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if self.gvr.d_q != self.gvr.d_v:
            raise ValueError("the residual chain needs gvr.d_q == gvr.d_v")
        if self.gvr.d_h % 8:
            raise ValueError("gvr.d_q / gvr.heads must be divisible by 8")
        if self.gvr.d_q % self.encoder.heads:
            raise ValueError("gvr.d_q must be divisible by encoder.heads")
        if max(self.train.epochs, self.oracle.epochs) > self.schedule.max_epoch + 1:
            raise ValueError("train.epochs or oracle.epochs exceeds the learning-rate schedule")
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump."""

        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "desk": {},
    "paper": {
        "gvr": {"d_q": 768, "d_v": 768, "heads": 8, "k": 15},
        "encoder": {"heads": 8, "ffn": 3072, "fixed_lr": 5e-5},
        "answerer": {"classifier_hidden": 1536, "sub_hidden": 768, "att_hidden": 1024},
        "questioner": {"embed_dim": 300, "hidden": 1024, "att_hidden": 1024},
        "oracle": {"embed_dim": 300, "hidden": 1024, "att_hidden": 1024},
        "synthetic": {"feature_width": 2048, "min_objects": 10, "max_objects": 100},
        "train": {"batch_size": 256},
    },
}


def _preset_dict(preset: str) -> dict[str, Any]:
    if preset not in PRESETS:
        raise ConfigError(f"Unknown preset {preset!r}; choose one of {sorted(PRESETS)}")
    data = RunConfig().model_dump()
    data["preset"] = preset
    for section, values in PRESETS[preset].items():
        data[section].update(values)
    return data


def _apply(data: dict[str, Any], key: str, raw: str) -> None:
    parts = key.strip().split(".")
    if len(parts) != 2 or parts[0] not in data or not isinstance(data[parts[0]], dict):
        raise ConfigError(f"Unknown config key {key!r}; expected 'section.key'")
    section, name = parts
    if name not in data[section]:
        raise ConfigError(f"Unknown config key {key!r}")
    data[section][name] = _cast_value(raw.strip(), data[section][name])


def read_config_file(path: str | Path) -> list[tuple[str, str]]:
    """Parse a flat ``section.key = value`` file into ordered pairs."""

    pairs: list[tuple[str, str]] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Could not read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'section.key = value'")
        key, value = stripped.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def _env_pairs(data: dict[str, Any], env: Mapping[str, str]) -> list[tuple[str, str]]:
    pairs = []
    for section, values in data.items():
        if not isinstance(values, dict):
            continue
        for name in values:
            env_key = f"{ENV_PREFIX}{section}_{name}".upper()
            if env_key in env:
                pairs.append((f"{section}.{name}", env[env_key]))
    return pairs


def load_config(
    preset: str = "desk",
    path: str | Path | None = None,
    *,
    overrides: Iterable[str] = (),
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """Build a ``RunConfig`` from preset, file, environment and overrides."""

    data = _preset_dict(preset)
    layered: list[tuple[str, str]] = []
    if path is not None:
        layered.extend(read_config_file(path))
    layered.extend(_env_pairs(data, os.environ if env is None else env))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        layered.append((key, value))
    for key, value in layered:
        _apply(data, key, value)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc
