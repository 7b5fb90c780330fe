"""Chunked overlap-add inference and chunk-level SDR evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import torch

from .config import STFTConfig
from .dataset import STEMS, CorpusError, SongInfo, load_song, scan_song
from .spectral import istft, stft

log = logging.getLogger(__name__)

SDR_CAP = 100.0
SDR_EPS = 1e-10

SpecModel = Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class ChunkPlan:
    chunk: int
    hop: int
    overlap: int  # samples shared by consecutive chunks, chunk - hop
    pad_front: int
    starts: tuple[int, ...]

    @property
    def padded_length(self) -> int:
        return self.starts[-1] + self.chunk


def plan_chunks(length: int, chunk: int, overlap: float = 0.5) -> ChunkPlan:
    """Chunk layout covering ``length`` samples.

    Inputs no longer than one chunk become a single zero-padded chunk. Longer
    inputs are front-padded by the overlap so that every real sample lies
    where the crossfade weights of all covering chunks sum to one.
    """
    if length < 1 or chunk < 1 or not 0 <= overlap < 1:
        raise ValueError("need length >= 1, chunk >= 1 and 0 <= overlap < 1")
    if length <= chunk:
        return ChunkPlan(chunk, chunk, 0, 0, (0,))
    shared = min(int(round(overlap * chunk)), chunk - 1)
    hop = chunk - shared
    n = max(1, math.ceil((length + 2 * shared - chunk) / hop) + 1)
    return ChunkPlan(chunk, hop, shared, shared, tuple(i * hop for i in range(n)))


def crossfade_window(chunk: int, hop: int) -> np.ndarray:
    """Box of ``hop`` samples convolved with a box of ``chunk - hop + 1``, normalised.

    Copies shifted by multiples of ``hop`` sum to exactly one. This is a
    trapezoid, close to a triangle at 50% overlap and a box at zero overlap.
    """
    width = chunk - hop + 1
    return np.convolve(np.ones(hop), np.ones(width)) / width


def crossfade_weight_sum(plan: ChunkPlan) -> np.ndarray:
    total = np.zeros(plan.padded_length)
    window = crossfade_window(plan.chunk, plan.hop)
    for s in plan.starts:
        total[s : s + plan.chunk] += window
    return total


@dataclass
class SeparationResult:
    stems: dict[str, np.ndarray]
    provenance: dict[str, Any] = field(default_factory=dict)


@torch.no_grad()
def separate(
    mixture: np.ndarray | torch.Tensor,
    models: Mapping[str, SpecModel],
    stft_cfg: STFTConfig,
    chunk_seconds: float,
    overlap: float = 0.5,
    batch_size: int = 1,
    provenance: dict | None = None,
) -> SeparationResult:
    """Separate a ``(2, samples)`` mixture with one spectrogram model per stem."""
    mix = torch.as_tensor(np.asarray(mixture, dtype=np.float32))
    if mix.dim() != 2 or mix.shape[0] != 2 or mix.shape[1] < 1:
        raise ValueError(f"mixture must be (2, samples) with samples >= 1, got {tuple(mix.shape)}")
    length = mix.shape[1]
    chunk = int(round(chunk_seconds * stft_cfg.sample_rate))
    plan = plan_chunks(length, chunk, overlap)
    padded = torch.nn.functional.pad(mix, (plan.pad_front, plan.padded_length - plan.pad_front - length))
    window = torch.from_numpy(crossfade_window(chunk, plan.hop))
    weight_sum = torch.from_numpy(crossfade_weight_sum(plan))
    pieces = torch.stack([padded[:, s : s + chunk] for s in plan.starts])  # (n, 2, chunk)

    stems = {}
    for name, model in models.items():
        if isinstance(model, torch.nn.Module):
            model.eval()
        out = torch.zeros(2, plan.padded_length, dtype=torch.float64)
        for i in range(0, len(plan.starts), batch_size):
            batch = pieces[i : i + batch_size]
            spec = stft(batch, stft_cfg)
            spec.data = model(spec.data)
            est = istft(spec, chunk).to(torch.float64)
            for j, s in enumerate(plan.starts[i : i + batch_size]):
                out[:, s : s + chunk] += est[j] * window
        out = out / weight_sum
        stems[name] = out[:, plan.pad_front : plan.pad_front + length].to(torch.float32).numpy()
    return SeparationResult(stems, dict(provenance or {}))


def sdr(ref: np.ndarray, est: np.ndarray) -> float:
    """10 log10(|ref|^2 / |ref - est|^2) in dB, capped at +100; NaN for a silent reference."""
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    signal = np.sum(ref**2)
    if signal == 0.0:
        return math.nan
    noise = np.sum((ref - est) ** 2)
    return min(SDR_CAP, 10.0 * math.log10((signal + SDR_EPS) / (noise + SDR_EPS)))


def chunk_sdrs(ref: np.ndarray, est: np.ndarray, sample_rate: int = 44100) -> np.ndarray:
    """SDR of every whole 1 s chunk (trailing partial chunk dropped)."""
    ref = np.asarray(ref)
    est = np.asarray(est)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    n = ref.shape[-1] // sample_rate
    return np.array(
        [sdr(ref[..., i * sample_rate : (i + 1) * sample_rate], est[..., i * sample_rate : (i + 1) * sample_rate]) for i in range(n)]
    )


def csdr_song(ref: np.ndarray, est: np.ndarray, sample_rate: int = 44100) -> float:
    """Median of 1 s chunk SDRs, ignoring chunks with a silent reference."""
    values = chunk_sdrs(ref, est, sample_rate)
    values = values[~np.isnan(values)]
    return float(np.median(values)) if values.size else math.nan


def _nanmedian(values) -> float:
    arr = np.array([v for v in values if v is not None and not math.isnan(v)])
    return float(np.median(arr)) if arr.size else math.nan


@dataclass
class EvalReport:
    per_song: dict[str, dict[str, float]]
    per_stem: dict[str, float]
    average: float
    metadata: dict[str, Any] = field(default_factory=dict)
    skipped: list[dict[str, str]] = field(default_factory=list)

    @classmethod
    def from_scores(cls, per_song: dict[str, dict[str, float]], stems, metadata=None, skipped=None) -> "EvalReport":
        per_stem = {stem: _nanmedian(scores.get(stem) for scores in per_song.values()) for stem in stems}
        finite = [v for v in per_stem.values() if not math.isnan(v)]
        average = float(np.mean(finite)) if finite else math.nan
        return cls(per_song, per_stem, average, dict(metadata or {}), list(skipped or []))

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        return clean(asdict(self))

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text


def corpus_hash(songs: list[SongInfo]) -> str:
    h = hashlib.sha256()
    for song in songs:
        h.update(f"{song.name}:{song.num_samples};".encode())
    return h.hexdigest()[:16]


def evaluate(
    root: str | Path,
    models: Mapping[str, SpecModel],
    stft_cfg: STFTConfig,
    chunk_seconds: float,
    overlap: float = 0.5,
    metadata: dict | None = None,
) -> EvalReport:
    """Separate every song under ``root`` and report per-stem cSDR medians.

    Song folders lacking a reference stem are skipped and listed in the report.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root is not a directory: {root}")
    songs, skipped = [], []
    for song_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            songs.append(scan_song(song_dir))
        except CorpusError as exc:
            log.warning("skipping %s: %s", song_dir.name, exc)
            skipped.append({"song": song_dir.name, "reason": str(exc)})

    per_song = {}
    for song in songs:
        stemset = load_song(song)
        result = separate(stemset.mixture, models, stft_cfg, chunk_seconds, overlap)
        per_song[song.name] = {
            stem: csdr_song(stemset.stems[stem], result.stems[stem], stft_cfg.sample_rate) for stem in models
        }
    meta = {"corpus_hash": corpus_hash(songs), "num_songs": len(songs), "chunk_seconds": chunk_seconds, "overlap": overlap}
    meta.update(metadata or {})
    stems = [s for s in STEMS if s in models]
    return EvalReport.from_scores(per_song, stems, meta, skipped)
