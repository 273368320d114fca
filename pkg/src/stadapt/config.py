"""Configuration dataclasses and the flat key-value config file format.

Config files are plain text, one ``section.key = value`` per line, ``#`` for
comments. Values are parsed by the dataclass field they land on, so the same
file drives every subcommand.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions for the detector network."""

    clip_len: int = 20
    image_size: int = 224
    encoder_channels: tuple[int, ...] = (64, 128, 256)
    feature_grid: int = 16
    feature_dim: int = 256
    token_dim: int = 768
    depth: int = 12
    n_heads: int = 12
    mlp_ratio: int = 4
    n_classes: int = 2

    def __post_init__(self):
        for name in ("clip_len", "image_size", "feature_grid", "feature_dim",
                     "token_dim", "n_heads", "mlp_ratio", "n_classes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.depth < 0:
            raise ConfigError("depth must be >= 0")
        if self.token_dim % self.n_heads != 0:
            raise ConfigError("token_dim must be divisible by n_heads")
        if self.encoder_channels[-1] != self.feature_dim:
            raise ConfigError("last encoder channel count must equal feature_dim")

    @property
    def n_tokens(self) -> int:
        return self.clip_len * self.feature_grid ** 2


PAPER_DEFAULT = ModelConfig()

DESK_REDUCED = ModelConfig(
    image_size=64,
    encoder_channels=(8, 16, 32),
    feature_grid=4,
    feature_dim=32,
    token_dim=64,
    depth=2,
    n_heads=4,
)

PRESETS = {"paper-default": PAPER_DEFAULT, "desk-reduced": DESK_REDUCED}


@dataclass(frozen=True)
class PretrainConfig:
    """Self-supervised initialization hyperparameters."""

    weight_contrastive: float = 1.0
    weight_reconstruction: float = 0.5
    temperature: float = 0.5
    sim_eps: float = 1e-8
    videos_per_batch: int = 32
    epochs: int = 100
    lr: float = 5e-4
    weight_decay: float = 1e-4
    warmup_start_lr: float = 1e-5
    warmup_frac: float = 0.05
    detach_target: bool = True
    collapse_warn_threshold: float = 0.95

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.weight_contrastive < 0 or self.weight_reconstruction < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.videos_per_batch < 2:
            raise ConfigError("videos_per_batch must be >= 2")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass(frozen=True)
class AdaptConfig:
    """Semi-supervised head-adaptation hyperparameters."""

    trade_off: float = 0.5
    epochs: int = 10
    source_batch_clips: int = 64
    target_batch_clips: int = 8
    lr: float = 5e-4
    weight_decay: float = 1e-4
    warmup_start_lr: float = 1e-5
    warmup_frac: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.trade_off <= 1.0:
            raise ConfigError("trade_off must be in [0, 1]")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.source_batch_clips < 1 or self.target_batch_clips < 1:
            raise ConfigError("batch sizes must be >= 1")


def model_config_from(mapping: dict[str, str]) -> ModelConfig:
    """Build a ModelConfig from ``model.*`` keys; ``model.preset`` sets the base."""
    preset = mapping.get("model.preset", "paper-default")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (choose from {sorted(PRESETS)})")
    return _apply_overrides(PRESETS[preset], "model", mapping, skip=("preset",))


def pretrain_config_from(mapping: dict[str, str]) -> PretrainConfig:
    return _apply_overrides(PretrainConfig(), "pretrain", mapping)


def adapt_config_from(mapping: dict[str, str]) -> AdaptConfig:
    return _apply_overrides(AdaptConfig(), "adapt", mapping)


def _coerce(raw: str, target_type) -> object:
    if target_type is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse {raw!r} as bool")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw.strip()
    # tuple-of-int fields (encoder_channels)
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _apply_overrides(base, section: str, mapping: dict[str, str], skip=()):
    by_name = {f.name: f for f in fields(base)}
    updates = {}
    prefix = section + "."
    for key, raw in mapping.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        if name in skip:
            continue
        if name not in by_name:
            raise ConfigError(f"unknown config key {key!r}")
        field = by_name[name]
        base_value = getattr(base, field.name)
        target = type(base_value) if base_value is not None else str
        updates[name] = _coerce(raw, target)
    return dataclasses.replace(base, **updates) if updates else base


def parse_config_file(path: Path | str) -> dict[str, str]:
    """Read a flat ``section.key = value`` file into an ordered mapping."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def format_config(mapping: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


def merge_overrides(mapping: dict[str, str], pairs: list[str]) -> dict[str, str]:
    """Apply ``--set section.key=value`` CLI pairs on top of a file mapping."""
    merged = dict(mapping)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like section.key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        merged[key.strip()] = value.strip()
    return merged


def model_config_to_mapping(cfg: ModelConfig) -> dict[str, str]:
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        out[f"model.{f.name}"] = str(value)
    return out
