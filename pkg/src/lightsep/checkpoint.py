"""Checkpoint files and stem manifests.

A checkpoint is the 4-byte header ``MSL1`` followed by a ``torch.save`` payload
holding only tensors and plain Python values (loadable with
``weights_only=True``)::

    {
      "format": 1,
      "config": <TOML text: [model], [stft], [train]>,
      "stem": "vocals",
      "epoch": 12, "val_loss": 0.03, "val_csdr": 7.1,
      "model": <state_dict>,
      "optimizer": <state_dict or None>,
      "train_state": {...},      # counters, lr, bests
      "rng": {...},              # torch / numpy generator states
    }

A manifest is a JSON object mapping stem names to checkpoint paths (relative
paths resolve against the manifest's directory).
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch

from .config import ModelConfig, STFTConfig, TrainConfig, dumps_config, loads_config
from .dataset import STEMS
from .network import BandSplitSeparator

MAGIC = b"MSL1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class CheckpointRecord:
    model_config: ModelConfig
    stft_config: STFTConfig
    train_config: TrainConfig
    stem: str
    model_state: dict[str, torch.Tensor]
    epoch: int = 0
    val_loss: float | None = None
    val_csdr: float | None = None
    optimizer_state: dict | None = None
    train_state: dict[str, Any] = field(default_factory=dict)
    rng_state: dict[str, Any] = field(default_factory=dict)
    path: Path | None = None

    def build_model(self) -> BandSplitSeparator:
        model = BandSplitSeparator(self.model_config, self.stft_config.kept_bins)
        model.load_state_dict(self.model_state)
        return model.eval()


def save_checkpoint(path: str | Path, record: CheckpointRecord) -> Path:
    path = Path(path)
    payload = {
        "format": FORMAT_VERSION,
        "config": dumps_config(record.model_config, record.stft_config, record.train_config),
        "stem": record.stem,
        "epoch": record.epoch,
        "val_loss": record.val_loss,
        "val_csdr": record.val_csdr,
        "model": record.model_state,
        "optimizer": record.optimizer_state,
        "train_state": record.train_state,
        "rng": record.rng_state,
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(MAGIC + buf.getvalue())
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> CheckpointRecord:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad header {raw[:4]!r})")
    payload = torch.load(io.BytesIO(raw[4:]), weights_only=True)
    if payload.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {payload.get('format')}")
    model_cfg, stft_cfg, train_cfg = loads_config(payload["config"])
    return CheckpointRecord(
        model_config=model_cfg,
        stft_config=stft_cfg,
        train_config=train_cfg,
        stem=payload["stem"],
        model_state=payload["model"],
        epoch=payload["epoch"],
        val_loss=payload["val_loss"],
        val_csdr=payload["val_csdr"],
        optimizer_state=payload["optimizer"],
        train_state=payload["train_state"],
        rng_state=payload["rng"],
        path=path,
    )


def read_manifest(path: str | Path) -> dict[str, Path]:
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(entries, dict) or not entries:
        raise CheckpointError(f"manifest {path} must be a non-empty JSON object of stem -> checkpoint")
    unknown = set(entries) - set(STEMS)
    if unknown:
        raise CheckpointError(f"manifest {path} names unknown stems {sorted(unknown)}")
    return {stem: (path.parent / p).resolve() for stem, p in entries.items()}


def write_manifest(path: str | Path, checkpoints: dict[str, str | Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps({k: str(v) for k, v in checkpoints.items()}, indent=2))
    return path


def load_manifest(path: str | Path) -> dict[str, CheckpointRecord]:
    """Load every checkpoint named in a manifest and check they share one STFT setup."""
    records = {stem: load_checkpoint(p) for stem, p in read_manifest(path).items()}
    for stem, rec in records.items():
        if rec.stem != stem:
            raise CheckpointError(f"manifest maps {stem!r} to a checkpoint trained for {rec.stem!r}")
    stfts = {rec.stft_config for rec in records.values()}
    if len(stfts) != 1:
        raise CheckpointError("checkpoints in the manifest use different STFT settings")
    return records
