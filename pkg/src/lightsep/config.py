"""Hyperparameters for the separator, its STFT front end and training.

Configs are frozen dataclasses validated on construction. On disk they live in
a TOML document with three sections::

    [model]
    preset = "proposed"      # optional, fields below override it
    g = 56

    [stft]
    window_size = 6144

    [train]
    lr = 2e-4
    augment_p_pitch = 0.5    # AugmentSpec fields carry an ``augment_`` prefix
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import tomli

from .augment import AugmentSpec

__all__ = [
    "ConfigError",
    "STFTConfig",
    "ModelConfig",
    "TrainConfig",
    "PRESETS",
    "preset",
    "load_config",
    "loads_config",
    "dumps_config",
    "describe",
]


class ConfigError(ValueError):
    """Raised when a config file cannot be parsed or violates an invariant."""


def _require(cond: bool, invariant: str) -> None:
    if not cond:
        raise ConfigError(invariant)


@dataclass(frozen=True)
class STFTConfig:
    window_size: int = 6144
    hop: int = 1024
    kept_bins: int = 2048
    sample_rate: int = 44100
    center: bool = True

    def __post_init__(self):
        _require(self.window_size > self.hop > 0, "window_size > hop > 0")
        _require(0 < self.kept_bins <= self.window_size // 2 + 1, "kept_bins <= window_size/2 + 1")
        _require(self.sample_rate > 0, "sample_rate > 0")


def _auto_seq_dim(g: int, heads: int) -> int:
    # attention width tracks the conv width (~3.5 g), rounded down so that
    # head_dim is even
    step = 2 * heads
    return max(step, (7 * g // 2) // step * step)


@dataclass(frozen=True)
class ModelConfig:
    n_band: int = 4
    n_enc: int = 3
    n_dec: int = 1
    n_rope: int = 5
    n_split_enc: int = 3
    n_split_dec: int = 1
    g: int = 56
    k_outer: int = 3
    k_inner: int = 1
    c_in: int = 4
    seq_dim: int | None = None
    heads: int = 4
    ffn_mult: int = 4
    tdf_factor: int = 32
    dropout: float = 0.0
    chunk_seconds: float = 9.0

    def __post_init__(self):
        if self.seq_dim is None:
            object.__setattr__(self, "seq_dim", _auto_seq_dim(self.g, self.heads))
        _require(self.c_in == 4, "c_in == 4 (stereo real/imag)")
        _require(self.n_band >= 1, "n_band >= 1")
        _require(self.g > 0 and self.g % self.n_band == 0, "g mod n_band != 0")
        _require((self.c_in * self.n_band) % self.n_band == 0, "c_in * n_band divisible by n_band")
        _require(self.n_enc >= self.n_dec >= 1, "n_enc >= n_dec >= 1")
        _require(self.n_split_enc >= self.n_split_dec >= 1, "n_split_enc >= n_split_dec >= 1")
        _require(self.n_rope >= 0, "n_rope >= 0")
        _require(self.k_outer % 2 == 1 and self.k_inner % 2 == 1, "kernel sizes must be odd")
        _require(self.heads >= 1 and self.seq_dim % self.heads == 0, "seq_dim mod heads == 0")
        _require((self.seq_dim // self.heads) % 2 == 0, "head_dim even")
        _require(self.ffn_mult >= 1 and self.tdf_factor >= 1, "ffn_mult >= 1 and tdf_factor >= 1")
        _require(0.0 <= self.dropout < 1.0, "0 <= dropout < 1")
        _require(self.chunk_seconds > 0, "chunk_seconds > 0")

    def check_bins(self, kept_bins: int) -> None:
        _require(kept_bins % self.n_band == 0, "kept_bins mod n_band == 0")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    plateau_patience: int = 20
    plateau_factor: float = 0.9
    early_stop_patience: int = 50
    improvement_tol: float = 1e-6
    batch_size: int = 8
    max_epochs: int = 1000
    train_overlap: float = 0.75
    infer_overlap: float = 0.5
    seed: int = 0
    weight_decay: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.999)
    grad_clip: float | None = 5.0
    multires_windows: tuple[tuple[int, int], ...] = ((4096, 1024), (2048, 512), (1024, 256))
    augment: AugmentSpec = field(default_factory=AugmentSpec)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(
            self, "multires_windows", tuple((int(w), int(h)) for w, h in self.multires_windows)
        )
        _require(self.lr >= 0, "lr >= 0")
        _require(0 < self.plateau_factor < 1, "0 < plateau_factor < 1")
        _require(0 <= self.train_overlap < 1, "0 <= train_overlap < 1")
        _require(0 <= self.infer_overlap < 1, "0 <= infer_overlap < 1")
        _require(self.plateau_patience >= 1, "plateau_patience >= 1")
        _require(self.early_stop_patience >= self.plateau_patience, "early_stop_patience >= plateau_patience")
        _require(self.batch_size >= 1, "batch_size >= 1")
        _require(len(self.multires_windows) >= 1, "at least one multi-resolution window")
        _require(all(w > h > 0 for w, h in self.multires_windows), "multires window > hop > 0")


PRESETS: dict[str, ModelConfig] = {
    "proposed": ModelConfig(),
    "proposed-s": ModelConfig(g=32, n_rope=6),
}


def preset(name: str) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _build(cls, section: dict[str, Any], base=None, section_name=""):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section_name}]: {sorted(unknown)}")
    try:
        if base is not None:
            return dataclasses.replace(base, **section)
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"[{section_name}]: {exc}") from None


def loads_config(text: str, preset_name: str | None = None) -> tuple[ModelConfig, STFTConfig, TrainConfig]:
    """Parse a config document. ``preset_name`` overrides any preset named in the file."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # tomli messages carry "(at line L, column C)"
        raise ConfigError(f"config parse error: {exc}") from None
    extra = set(doc) - {"model", "stft", "train"}
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")

    model_section = dict(doc.get("model", {}))
    file_preset = model_section.pop("preset", None)
    base = preset(preset_name or file_preset) if (preset_name or file_preset) else None
    if base is not None and "g" in model_section and "seq_dim" not in model_section:
        # a preset's resolved seq_dim must not survive a change of g
        model_section["seq_dim"] = None
    model = _build(ModelConfig, model_section, base, "model")
    stft = _build(STFTConfig, dict(doc.get("stft", {})), None, "stft")

    train_section = dict(doc.get("train", {}))
    aug = {k[len("augment_"):]: v for k, v in train_section.items() if k.startswith("augment_")}
    train_section = {k: v for k, v in train_section.items() if not k.startswith("augment_")}
    train_section["augment"] = _build(AugmentSpec, aug, None, "train.augment_*")
    train = _build(TrainConfig, train_section, None, "train")

    model.check_bins(stft.kept_bins)
    return model, stft, train


def load_config(path: str | Path, preset_name: str | None = None) -> tuple[ModelConfig, STFTConfig, TrainConfig]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return loads_config(path.read_text(), preset_name)


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _flat_items(cfg) -> list[tuple[str, Any]]:
    items = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            items.extend((f"{f.name}_{k}", v) for k, v in _flat_items(value))
        elif value is not None:
            items.append((f.name, value))
    return items


def dumps_config(model: ModelConfig, stft: STFTConfig, train: TrainConfig) -> str:
    """Serialize configs to the TOML layout read by :func:`loads_config`."""
    lines = []
    for name, cfg in (("model", model), ("stft", stft), ("train", train)):
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in _flat_items(cfg))
        lines.append("")
    return "\n".join(lines)


def describe(model: ModelConfig, stft: STFTConfig | None = None, train: TrainConfig | None = None) -> str:
    """Deterministic ``key=value`` summary of every field plus derived shapes."""
    stft = stft or STFTConfig()
    train = train or TrainConfig()
    lines = []
    for name, cfg in (("model", model), ("stft", stft), ("train", train)):
        lines.append(f"[{name}]")
        lines.extend(f"{k}={v}" for k, v in _flat_items(cfg))
    lines.append("[derived]")
    lines.append(f"bins_per_band={stft.kept_bins // model.n_band}")
    lines.append(f"band_channels={model.c_in * model.n_band}")
    lines.append(f"bottleneck_channels={(model.n_enc + 1) * model.g}")
    lines.append(f"head_dim={model.seq_dim // model.heads}")
    chunk = int(round(model.chunk_seconds * stft.sample_rate))
    lines.append(f"chunk_samples={chunk}")
    lines.append(f"chunk_frames={1 + chunk // stft.hop}")
    return "\n".join(lines)
