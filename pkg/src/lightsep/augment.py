"""Training-time augmentation of stem sets.

Every transform works on channel-first stereo arrays of shape ``(2, samples)``
and takes an explicit :class:`numpy.random.Generator`; nothing here touches
global random state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.signal import istft, resample, stft

if TYPE_CHECKING:
    from .dataset import StemSet

PITCH_WINDOW = 2048
_PITCH_HOP = 512


@dataclass(frozen=True)
class AugmentSpec:
    p_remix: float = 0.5
    p_gain: float = 0.5
    p_polarity: float = 0.5
    p_pitch: float = 0.5
    p_shift: float = 0.5
    p_flip: float = 0.5
    gain_db: tuple[float, float] = (-6.0, 6.0)
    pitch_semitones: tuple[float, float] = (-2.0, 2.0)
    shift_seconds: tuple[float, float] = (-0.5, 0.5)
    sample_rate: int = 44100
    enabled: bool = True

    def __post_init__(self):
        for name in ("p_remix", "p_gain", "p_polarity", "p_pitch", "p_shift", "p_flip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("gain_db", "pitch_semitones", "shift_seconds"):
            lo, hi = (float(v) for v in getattr(self, name))
            if lo > hi:
                raise ValueError(f"{name} range is empty: {lo} > {hi}")
            object.__setattr__(self, name, (lo, hi))

    @classmethod
    def disabled(cls) -> "AugmentSpec":
        return cls(p_remix=0.0, p_gain=0.0, p_polarity=0.0, p_pitch=0.0, p_shift=0.0, p_flip=0.0)

    @property
    def max_gain_db(self) -> float:
        return max(abs(self.gain_db[0]), abs(self.gain_db[1]))


def polarity_invert(wave: np.ndarray) -> np.ndarray:
    return -wave


def channel_flip(wave: np.ndarray) -> np.ndarray:
    if wave.shape[0] != 2:
        raise ValueError(f"channel_flip expects stereo (2, samples), got {wave.shape}")
    return wave[::-1].copy()


def apply_gain(wave: np.ndarray, db: float) -> np.ndarray:
    return (wave * np.float32(10.0 ** (db / 20.0))).astype(wave.dtype, copy=False)


def random_gain(wave: np.ndarray, db_range: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    return apply_gain(wave, rng.uniform(*db_range))


def circular_shift(wave: np.ndarray, n: int) -> np.ndarray:
    return np.roll(wave, n, axis=-1)


def temporal_shift(
    wave: np.ndarray, seconds_range: tuple[float, float], rng: np.random.Generator, sample_rate: int = 44100
) -> np.ndarray:
    lo, hi = (int(round(s * sample_rate)) for s in seconds_range)
    return circular_shift(wave, int(rng.integers(lo, hi + 1)))


def _time_stretch(x: np.ndarray, rate: float) -> np.ndarray:
    """Phase-vocoder stretch to about ``len(x) * rate`` samples, pitch unchanged."""
    noverlap = PITCH_WINDOW - _PITCH_HOP
    _, _, z = stft(x, nperseg=PITCH_WINDOW, noverlap=noverlap)
    n_frames = z.shape[-1]
    steps = np.arange(0, n_frames - 1, 1.0 / rate)
    i0 = steps.astype(int)
    alpha = steps - i0
    c0, c1 = z[..., i0], z[..., i0 + 1]
    mag = (1 - alpha) * np.abs(c0) + alpha * np.abs(c1)
    # expected per-hop phase advance of each bin plus the measured deviation
    advance = 2 * np.pi * _PITCH_HOP * np.arange(z.shape[-2]) / PITCH_WINDOW
    dev = np.angle(c1) - np.angle(c0) - advance[:, None]
    dev -= 2 * np.pi * np.round(dev / (2 * np.pi))
    phase = np.angle(z[..., :1]) + np.cumsum(advance[:, None] + dev, axis=-1) - (advance[:, None] + dev[..., :1])
    _, y = istft(mag * np.exp(1j * phase), nperseg=PITCH_WINDOW, noverlap=noverlap)
    return y


def pitch_shift(wave: np.ndarray, semitones: float) -> np.ndarray:
    """Shift pitch by ``semitones`` (rounded to whole cents), keeping the length.

    The signal is time-stretched by the pitch ratio with a phase vocoder,
    then resampled back to its original length.
    """
    length = wave.shape[-1]
    if length < PITCH_WINDOW:
        raise ValueError(f"pitch_shift needs at least {PITCH_WINDOW} samples, got {length}")
    cents = int(round(semitones * 100))
    if cents == 0:
        return wave.copy()
    rate = 2.0 ** (cents / 1200.0)
    stretched = _time_stretch(wave.astype(np.float64), rate)
    # resampling by exactly 1 / rate keeps the pitch ratio exact; the few
    # samples the vocoder loses at the end are zero-filled
    target = int(round(stretched.shape[-1] / rate))
    out = resample(stretched, target, axis=-1)[..., :length]
    out = np.pad(out, [(0, 0)] * (out.ndim - 1) + [(0, length - out.shape[-1])])
    return out.astype(wave.dtype)


def random_pitch_shift(
    wave: np.ndarray, semitone_range: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    return pitch_shift(wave, rng.uniform(*semitone_range))


def random_mix(batch: Sequence["StemSet"], rng: np.random.Generator) -> list["StemSet"]:
    """Rebuild each item from stems drawn independently from random batch members."""
    from .dataset import STEMS, StemSet

    out = []
    for _ in range(len(batch)):
        picks = rng.integers(0, len(batch), size=len(STEMS))
        stems = {name: batch[i].stems[name] for name, i in zip(STEMS, picks)}
        out.append(StemSet(stems, batch[0].sample_rate))
    return out


def augment_stem(wave: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    # every draw is consumed whether or not the transform fires, so the random
    # stream does not depend on which branches were taken
    fire = rng.random(5) < np.array([spec.p_gain, spec.p_polarity, spec.p_pitch, spec.p_shift, spec.p_flip])
    db = rng.uniform(*spec.gain_db)
    semitones = rng.uniform(*spec.pitch_semitones)
    lo, hi = (int(round(s * spec.sample_rate)) for s in spec.shift_seconds)
    shift = int(rng.integers(lo, hi + 1))

    out = wave
    if fire[0]:
        out = apply_gain(out, db)
    if fire[1]:
        out = polarity_invert(out)
    if fire[2] and out.shape[-1] >= PITCH_WINDOW:
        out = pitch_shift(out, semitones)
    if fire[3]:
        out = circular_shift(out, shift)
    if fire[4]:
        out = channel_flip(out)
    return np.ascontiguousarray(out, dtype=np.float32)


def augment_pipeline(stemset: "StemSet", spec: AugmentSpec, rng: np.random.Generator) -> "StemSet":
    """Augment each stem independently; the mixture is always re-derived as the stem sum."""
    from .dataset import StemSet

    if not spec.enabled:
        return stemset
    stems = {name: augment_stem(wave, spec, rng) for name, wave in stemset.stems.items()}
    return StemSet(stems, stemset.sample_rate)


def augment_batch(batch: Sequence["StemSet"], spec: AugmentSpec, rng: np.random.Generator) -> list["StemSet"]:
    """Random remix (with probability ``p_remix``) followed by the per-stem pipeline."""
    if not spec.enabled:
        return list(batch)
    items = random_mix(batch, rng) if rng.random() < spec.p_remix else list(batch)
    return [augment_pipeline(item, spec, rng) for item in items]
