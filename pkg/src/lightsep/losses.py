"""Training objective: waveform L1 plus multi-resolution complex STFT MAE."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import torch

from .spectral import ComplexSpectrogram, istft

log = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    l1_time: torch.Tensor
    multires: torch.Tensor
    total: torch.Tensor

    def item(self) -> dict[str, float]:
        return {"l1_time": self.l1_time.item(), "multires": self.multires.item(), "total": self.total.item()}


def _check_pair(est: torch.Tensor, ref: torch.Tensor) -> None:
    if est.shape != ref.shape:
        raise ValueError(f"estimate {tuple(est.shape)} and reference {tuple(ref.shape)} differ in shape")


def l1_time(est: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    _check_pair(est, ref)
    return (est - ref).abs().mean()


def complex_stft(wave: torch.Tensor, window: int, hop: int) -> torch.Tensor:
    flat = wave.reshape(-1, wave.shape[-1])
    win = torch.hann_window(window, dtype=wave.dtype, device=wave.device)
    return torch.stft(flat, window, hop, window=win, center=True, pad_mode="reflect", return_complex=True)


def multires_complex_mae(est: torch.Tensor, ref: torch.Tensor, windows: Sequence[tuple[int, int]]) -> torch.Tensor:
    """Mean |Re| and |Im| STFT difference, averaged over resolutions.

    Resolutions whose window exceeds the signal length are skipped.
    """
    _check_pair(est, ref)
    if not windows:
        raise ValueError("need at least one resolution")
    length = est.shape[-1]
    terms = []
    for window, hop in windows:
        if window > length:
            log.warning("skipping resolution (%d, %d): signal has only %d samples", window, hop, length)
            continue
        diff = complex_stft(est, window, hop) - complex_stft(ref, window, hop)
        terms.append(torch.view_as_real(diff).abs().mean())
    if not terms:
        raise ValueError(f"every resolution window exceeds the signal length ({length})")
    return torch.stack(terms).mean()


def total_loss(est_spec: ComplexSpectrogram, ref: torch.Tensor, windows: Sequence[tuple[int, int]]) -> LossBreakdown:
    """Unweighted sum of both terms, evaluated on ``istft(est_spec)`` against waveform ``ref``."""
    est = istft(est_spec, ref.shape[-1])
    l1 = l1_time(est, ref)
    mr = multires_complex_mae(est, ref, windows)
    for name, value in (("l1_time", l1), ("multires", mr)):
        if not torch.isfinite(value):
            raise FloatingPointError(f"non-finite {name} loss")
    return LossBreakdown(l1, mr, l1 + mr)
