"""Equal-width band splitting and grouped "split" convolutions.

``band_split`` cuts the frequency axis into ``n_band`` equal subbands and stacks
them on the channel axis so that band ``b`` owns the contiguous channel slice
``[b * C, (b + 1) * C)``. A grouped convolution with ``n_band`` groups then
processes every subband with its own weights.
"""
from __future__ import annotations

import torch
from torch import nn


def band_split(x: torch.Tensor, n_band: int) -> torch.Tensor:
    """``(..., C, F, T)`` -> ``(..., n_band * C, F / n_band, T)``."""
    *lead, c, f, t = x.shape
    if f % n_band:
        raise ValueError(f"{f} bins do not split into {n_band} equal bands")
    x = x.reshape(*lead, c, n_band, f // n_band, t)
    return x.transpose(-4, -3).reshape(*lead, n_band * c, f // n_band, t)


def band_merge(x: torch.Tensor, n_band: int, channels_per_group: int = 4) -> torch.Tensor:
    """Exact inverse of :func:`band_split` for fully decoded tensors."""
    *lead, c, fb, t = x.shape
    if c != n_band * channels_per_group:
        raise ValueError(
            f"band_merge expects {channels_per_group} channels per group ({n_band * channels_per_group} total), got {c}"
        )
    x = x.reshape(*lead, n_band, channels_per_group, fb, t)
    return x.transpose(-4, -3).reshape(*lead, channels_per_group, n_band * fb, t)


class SplitConv(nn.Conv2d):
    """K x K grouped convolution over (frequency, time), one group per band."""

    def __init__(self, in_channels: int, out_channels: int, n_band: int, kernel_size: int = 1, bias: bool = True):
        if in_channels % n_band or out_channels % n_band:
            raise ValueError(
                f"channels ({in_channels} -> {out_channels}) must be divisible by n_band={n_band}"
            )
        super().__init__(
            in_channels, out_channels, kernel_size, padding=kernel_size // 2, groups=n_band, bias=bias
        )
        self.n_band = n_band


def split_conv_params(in_channels: int, out_channels: int, kernel_size: int, n_band: int, bias: bool = True) -> int:
    return in_channels * out_channels * kernel_size**2 // n_band + (out_channels if bias else 0)
