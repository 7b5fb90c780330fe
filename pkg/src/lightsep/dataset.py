"""Stem-folder corpora: scanning, chunk indexing and loading.

A corpus is laid out as ``<root>/<song>/{vocals,drums,bass,other[,mixture]}.wav``.
Waveforms are float32, channel-first ``(2, samples)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import torch
from scipy.io import wavfile

STEMS = ("vocals", "drums", "bass", "other")
SAMPLE_RATE = 44100


class CorpusError(RuntimeError):
    pass


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float32) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float32) / 32768.0
    if data.dtype == np.int32:
        # 24-bit PCM is returned left-justified in int32
        return (data.astype(np.float64) / 2147483648.0).astype(np.float32)
    return data.astype(np.float32)


def read_wav(path: str | Path, mmap: bool = False) -> tuple[np.ndarray, int]:
    """Read a stereo WAV as float32 ``(2, samples)``."""
    try:
        sr, data = wavfile.read(str(path), mmap=mmap)
    except ValueError:
        if not mmap:
            raise
        sr, data = wavfile.read(str(path))
    if data.ndim == 1 or data.shape[1] != 2:
        raise CorpusError(f"{path}: expected stereo audio, got shape {data.shape}")
    return np.ascontiguousarray(_to_float(data).T), sr


def write_wav(path: str | Path, wave: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write ``(2, samples)`` audio as 32-bit float WAV."""
    wave = np.asarray(wave, dtype=np.float32)
    wavfile.write(str(path), sample_rate, np.ascontiguousarray(wave.T))


def wav_length(path: str | Path) -> tuple[int, int]:
    try:
        sr, data = wavfile.read(str(path), mmap=True)
    except ValueError:
        sr, data = wavfile.read(str(path))
    return data.shape[0], sr


class StemSet:
    """Aligned stereo stems of one excerpt; the mixture is their sum."""

    def __init__(self, stems: Mapping[str, np.ndarray], sample_rate: int = SAMPLE_RATE):
        missing = [s for s in STEMS if s not in stems]
        if missing:
            raise ValueError(f"missing stems: {missing}")
        lengths = {stems[s].shape for s in STEMS}
        if len(lengths) != 1:
            raise ValueError(f"stems have mismatched shapes: {lengths}")
        self.stems = {s: stems[s] for s in STEMS}
        self.sample_rate = sample_rate

    @property
    def mixture(self) -> np.ndarray:
        return self.stems["vocals"] + self.stems["drums"] + self.stems["bass"] + self.stems["other"]

    @property
    def num_samples(self) -> int:
        return self.stems["vocals"].shape[-1]

    def __getitem__(self, stem: str) -> np.ndarray:
        return self.stems[stem]

    def __eq__(self, other):
        if not isinstance(other, StemSet):
            return NotImplemented
        return self.sample_rate == other.sample_rate and all(
            np.array_equal(self.stems[s], other.stems[s]) for s in STEMS
        )

    @classmethod
    def zeros(cls, num_samples: int, sample_rate: int = SAMPLE_RATE) -> "StemSet":
        return cls({s: np.zeros((2, num_samples), np.float32) for s in STEMS}, sample_rate)


@dataclass(frozen=True)
class SongInfo:
    name: str
    paths: dict[str, Path]
    num_samples: int
    sample_rate: int = SAMPLE_RATE

    @property
    def mixture_path(self) -> Path | None:
        return self.paths.get("mixture")


@dataclass(frozen=True)
class ChunkRef:
    song_id: str
    start: int
    length: int
    padded: bool = False


def scan_song(song_dir: str | Path) -> SongInfo:
    song_dir = Path(song_dir)
    paths = {}
    for stem in STEMS:
        path = song_dir / f"{stem}.wav"
        if not path.exists():
            raise CorpusError(f"missing stem {stem} in {song_dir.name}")
        paths[stem] = path
    if (song_dir / "mixture.wav").exists():
        paths["mixture"] = song_dir / "mixture.wav"
    lengths = {}
    for stem, path in paths.items():
        n, sr = wav_length(path)
        if sr != SAMPLE_RATE:
            raise CorpusError(f"{song_dir.name}/{stem}: sample rate {sr} != {SAMPLE_RATE}")
        lengths[stem] = n
    if len(set(lengths.values())) != 1:
        raise CorpusError(f"mismatched stem lengths in {song_dir.name}: {lengths}")
    return SongInfo(song_dir.name, paths, lengths["vocals"])


def scan_corpus(root: str | Path) -> list[SongInfo]:
    """One :class:`SongInfo` per song directory under ``root``, sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root is not a directory: {root}")
    return [scan_song(d) for d in sorted(p for p in root.iterdir() if p.is_dir())]


def index_chunks(
    song_length: int,
    chunk_seconds: float,
    overlap: float,
    sample_rate: int = SAMPLE_RATE,
    song_id: str = "",
) -> list[ChunkRef]:
    if chunk_seconds <= 0 or not 0 <= overlap < 1:
        raise ValueError("need chunk_seconds > 0 and 0 <= overlap < 1")
    chunk = int(round(chunk_seconds * sample_rate))
    stride = max(1, int(round((1 - overlap) * chunk)))
    if song_length <= chunk:
        return [ChunkRef(song_id, 0, chunk, padded=song_length < chunk)]
    starts = list(range(0, song_length - chunk + 1, stride))
    if starts[-1] + chunk < song_length:
        starts.append(starts[-1] + stride)
    return [ChunkRef(song_id, s, chunk, padded=s + chunk > song_length) for s in starts]


def _read_range(path: Path, start: int, length: int) -> np.ndarray:
    try:
        try:
            _, data = wavfile.read(str(path), mmap=True)
        except ValueError:
            _, data = wavfile.read(str(path))
    except Exception as exc:
        raise CorpusError(f"failed to read {path}: {exc}") from exc
    if data.ndim == 1 or data.shape[1] != 2:
        raise CorpusError(f"{path}: expected stereo audio, got shape {data.shape}")
    segment = _to_float(np.asarray(data[start : start + length])).T
    if segment.shape[1] < length:
        segment = np.pad(segment, ((0, 0), (0, length - segment.shape[1])))
    return np.ascontiguousarray(segment, dtype=np.float32)


def load_chunk(ref: ChunkRef, songs: Mapping[str, SongInfo]) -> StemSet:
    """Crop all four stems to ``[start, start + length)``, zero-padding past the end."""
    try:
        song = songs[ref.song_id]
    except KeyError:
        raise CorpusError(f"unknown song {ref.song_id!r}") from None
    stems = {}
    for stem in STEMS:
        try:
            stems[stem] = _read_range(song.paths[stem], ref.start, ref.length)
        except CorpusError as exc:
            raise CorpusError(f"{ref.song_id}/{stem}: {exc}") from exc
    return StemSet(stems, song.sample_rate)


def load_song(song: SongInfo) -> StemSet:
    return load_chunk(ChunkRef(song.name, 0, song.num_samples), {song.name: song})


def mixture_error(song: SongInfo) -> float:
    """Max abs deviation between the stored mixture file and the stem sum."""
    if song.mixture_path is None:
        raise CorpusError(f"{song.name} has no mixture file")
    mix, _ = read_wav(song.mixture_path)
    return float(np.max(np.abs(load_song(song).mixture - mix), initial=0.0))


class Corpus:
    """Songs of a corpus plus their chunk index."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.songs = scan_corpus(root)
        self.by_name = {s.name: s for s in self.songs}

    def __len__(self):
        return len(self.songs)

    def chunks(self, chunk_seconds: float, overlap: float) -> list[ChunkRef]:
        refs = []
        for song in self.songs:
            refs.extend(index_chunks(song.num_samples, chunk_seconds, overlap, song.sample_rate, song.name))
        return refs

    def load_chunk(self, ref: ChunkRef) -> StemSet:
        return load_chunk(ref, self.by_name)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Seeded per-epoch permutation of the chunk index."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def iter_batches(items: Sequence, order: np.ndarray, batch_size: int) -> Iterator[list]:
    for i in range(0, len(order), batch_size):
        yield [items[j] for j in order[i : i + batch_size]]


def stack_stem(batch: Sequence[StemSet], stem: str) -> tuple[torch.Tensor, torch.Tensor]:
    """(mixture, target) tensors of shape ``(batch, 2, samples)``."""
    mix = torch.from_numpy(np.stack([b.mixture for b in batch]))
    tgt = torch.from_numpy(np.stack([b.stems[stem] for b in batch]))
    return mix, tgt


def num_chunks(song_length: int, chunk_seconds: float, overlap: float, sample_rate: int = SAMPLE_RATE) -> int:
    """Closed-form count matching :func:`index_chunks`."""
    chunk = int(round(chunk_seconds * sample_rate))
    stride = max(1, int(round((1 - overlap) * chunk)))
    if song_length <= chunk:
        return 1
    return math.ceil((song_length - chunk) / stride) + 1


class ChunkDataset(Sequence):
    """Lazy sequence of training chunks; items are loaded on access."""

    def __init__(self, corpus: Corpus, chunk_seconds: float, overlap: float):
        self.corpus = corpus
        self.refs = corpus.chunks(chunk_seconds, overlap)

    def __len__(self):
        return len(self.refs)

    def __getitem__(self, i) -> StemSet:
        return self.corpus.load_chunk(self.refs[i])
