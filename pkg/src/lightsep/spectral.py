"""STFT front end: analysis, synthesis and real-channel packing.

Stereo complex spectrograms are packed into 4 real channels ordered
``[L.real, L.imag, R.real, R.imag]``; bins above ``kept_bins`` are dropped on
analysis and zero-filled on synthesis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import STFTConfig


@dataclass
class ComplexSpectrogram:
    data: torch.Tensor  # (..., 4, kept_bins, frames)
    cfg: STFTConfig
    original_length: int | None

    def __post_init__(self):
        if self.data.shape[-3] != 4:
            raise ValueError(f"expected 4 packed channels, got shape {tuple(self.data.shape)}")
        if self.data.shape[-2] != self.cfg.kept_bins:
            raise ValueError(f"expected {self.cfg.kept_bins} bins, got {self.data.shape[-2]}")

    @property
    def frames(self) -> int:
        return self.data.shape[-1]


def num_frames(length: int, hop: int) -> int:
    return 1 + length // hop


def pack(z: torch.Tensor) -> torch.Tensor:
    """Complex ``(..., 2, F, T)`` -> real ``(..., 4, F, T)``."""
    if not z.is_complex() or z.shape[-3] != 2:
        raise ValueError(f"pack expects complex (..., 2, F, T), got {z.dtype} {tuple(z.shape)}")
    parts = torch.view_as_real(z)  # (..., 2, F, T, 2)
    parts = parts.movedim(-1, -3)  # (..., 2, 2, F, T): channel, re/im
    return parts.reshape(*z.shape[:-3], 4, *z.shape[-2:])


def unpack(x: torch.Tensor) -> torch.Tensor:
    """Real ``(..., 4, F, T)`` -> complex ``(..., 2, F, T)``."""
    if x.shape[-3] != 4:
        raise ValueError(f"unpack expects 4 channels, got {tuple(x.shape)}")
    parts = x.reshape(*x.shape[:-3], 2, 2, *x.shape[-2:]).movedim(-3, -1)
    return torch.view_as_complex(parts.contiguous())


def _pad_edges(wave: torch.Tensor, pad: int) -> torch.Tensor:
    """Odd-symmetric extension by ``pad`` samples on both sides.

    ``x[-k] = 2 x[0] - x[k]`` keeps value and slope continuous at the
    boundary, so in-band signals do not pick up the broadband edge kink that
    plain mirroring leaves and that the bin truncation would then cut off.
    The map is linear. Signals too short to reflect are zero-padded instead.
    """
    if wave.shape[-1] <= pad:
        return F.pad(wave, (pad, pad))
    left = 2 * wave[..., :1] - wave[..., 1 : pad + 1].flip(-1)
    right = 2 * wave[..., -1:] - wave[..., -pad - 1 : -1].flip(-1)
    return torch.cat([left, wave, right], dim=-1)


def stft(wave: torch.Tensor | np.ndarray, cfg: STFTConfig) -> ComplexSpectrogram:
    """Stereo ``(..., 2, samples)`` waveform -> packed, truncated spectrogram."""
    wave = torch.as_tensor(wave)
    if wave.shape[-2] != 2:
        raise ValueError(f"stft expects stereo (..., 2, samples), got {tuple(wave.shape)}")
    if wave.shape[-1] < 1:
        raise ValueError("stft needs at least one sample")
    if not torch.isfinite(wave).all():
        raise ValueError("stft input contains non-finite samples")
    length = wave.shape[-1]
    if cfg.center:
        wave = _pad_edges(wave, cfg.window_size // 2)
    elif length < cfg.window_size:
        raise ValueError(f"uncentered stft needs at least {cfg.window_size} samples")
    lead = wave.shape[:-1]
    window = torch.hann_window(cfg.window_size, dtype=wave.dtype, device=wave.device)
    z = torch.stft(
        wave.reshape(-1, wave.shape[-1]), cfg.window_size, cfg.hop, window=window, center=False, return_complex=True
    )
    z = z[:, : cfg.kept_bins].reshape(*lead, cfg.kept_bins, z.shape[-1])
    return ComplexSpectrogram(pack(z), cfg, length)


def _overlap_add(frames: torch.Tensor, hop: int) -> torch.Tensor:
    # frames: (B, n_fft, T) -> (B, (T - 1) * hop + n_fft)
    n_fft, t = frames.shape[-2:]
    total = (t - 1) * hop + n_fft
    out = F.fold(frames, (1, total), (1, n_fft), stride=(1, hop))
    return out.reshape(frames.shape[0], total)


def istft(spec: ComplexSpectrogram, length: int | None = None) -> torch.Tensor:
    """Inverse of :func:`stft`; returns ``(..., 2, original_length)``.

    Discarded bins are zero-filled, frames are windowed, overlap-added and
    normalised by the summed squared window.
    """
    length = length if length is not None else spec.original_length
    if length is None:
        raise ValueError("istft needs the original signal length")
    cfg = spec.cfg
    z = unpack(spec.data)
    full = cfg.window_size // 2 + 1
    if z.shape[-2] < full:
        z = F.pad(z, (0, 0, 0, full - z.shape[-2]))
    lead = z.shape[:-2]
    n_frames = z.shape[-1]
    window = torch.hann_window(cfg.window_size, dtype=spec.data.dtype, device=spec.data.device)
    frames = torch.fft.irfft(z.reshape(-1, full, n_frames), n=cfg.window_size, dim=-2) * window[:, None]
    wave = _overlap_add(frames, cfg.hop)
    norm = _overlap_add((window**2)[None, :, None].expand(1, -1, n_frames), cfg.hop)[0]
    offset = cfg.window_size // 2 if cfg.center else 0
    wave, norm = wave[:, offset : offset + length], norm[offset : offset + length]
    if wave.shape[-1] < length:
        raise ValueError(f"spectrogram with {n_frames} frames cannot produce {length} samples")
    wave = wave / norm.clamp_min(1e-11)
    return wave.reshape(*lead, length)


def cutoff_hz(cfg: STFTConfig) -> float:
    """Frequency of the first discarded bin."""
    return cfg.kept_bins * cfg.sample_rate / cfg.window_size
