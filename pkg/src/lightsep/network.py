"""Band-split U-Net with an asymmetric encoder/decoder and a RoPE bottleneck.

Data flow for one stem model (frequency size stays ``bins // n_band`` throughout)::

    spec (4, F, T) -> band_split -> lift_in (split conv, K=k_outer)
      -> n_enc x [SplitTFCBlock, time downsample x2, channels n*g -> (n+1)*g]
      -> SplitTFCBlock -> DualPathRoPE
      -> n_dec x [time upsample, fused encoder skips, SplitTFCBlock]
      -> lift_out (split conv, K=k_outer) -> band_merge -> spec (4, F, T)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .bandsplit import SplitConv, band_merge, band_split
from .config import ModelConfig
from .seqmodel import DualPathRoPE
from .spectral import ComplexSpectrogram


class BandLinear(nn.Module):
    """Fully-connected layer along the frequency axis with separate weights per band."""

    def __init__(self, n_band: int, f_in: int, f_out: int):
        super().__init__()
        self.n_band = n_band
        self.weight = nn.Parameter(torch.empty(n_band, f_in, f_out))
        self.bias = nn.Parameter(torch.zeros(n_band, f_out))
        bound = f_in**-0.5
        nn.init.uniform_(self.weight, -bound, bound)
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, f, t = x.shape
        x = x.reshape(b, self.n_band, c // self.n_band, f, t)
        y = torch.einsum("bgcft,gfo->bgcot", x, self.weight) + self.bias[None, :, None, :, None]
        return y.reshape(b, c, -1, t)


class TDF(nn.Module):
    """Per-band frequency bottleneck: FC -> GELU -> FC."""

    def __init__(self, n_band: int, bins: int, factor: int):
        super().__init__()
        hidden = max(1, bins // factor)
        self.net = nn.Sequential(BandLinear(n_band, bins, hidden), nn.GELU(), BandLinear(n_band, hidden, bins))

    def forward(self, x):
        return self.net(x)


class SplitTFCBlock(nn.Module):
    """Residual block whose only dense layer is the 1x1 skip projection."""

    def __init__(self, channels: int, n_split: int, n_band: int, bins: int, kernel_size: int = 1, tdf_factor: int = 32):
        super().__init__()
        layers = []
        for _ in range(n_split):
            layers += [SplitConv(channels, channels, n_band, kernel_size), nn.GroupNorm(n_band, channels), nn.GELU()]
        self.tfc = nn.Sequential(*layers)
        self.tdf = TDF(n_band, bins, tdf_factor)
        self.skip = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        h = self.tfc(x)
        h = h + self.tdf(h)
        return h + self.skip(x)


@dataclass
class EncoderState:
    skips: list[torch.Tensor]  # skips[n-1]: output of layer n before downsampling
    bottleneck: torch.Tensor


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig, bins: int):
        super().__init__()
        g, nb = cfg.g, cfg.n_band
        self.n_layers = cfg.n_enc
        self.blocks = nn.ModuleList(
            SplitTFCBlock(n * g, cfg.n_split_enc, nb, bins, cfg.k_inner, cfg.tdf_factor) for n in range(1, cfg.n_enc + 1)
        )
        self.downs = nn.ModuleList(
            nn.Conv2d(n * g, (n + 1) * g, (1, 2), stride=(1, 2), groups=nb) for n in range(1, cfg.n_enc + 1)
        )

    def forward(self, x: torch.Tensor) -> EncoderState:
        if x.shape[-1] < 2**self.n_layers:
            raise ValueError(f"input too short: {x.shape[-1]} frames < {2 ** self.n_layers}")
        skips = []
        for block, down in zip(self.blocks, self.downs):
            x = block(x)
            skips.append(x)
            x = down(F.pad(x, (0, x.shape[-1] % 2)))
        return EncoderState(skips, x)


class DecoderStage(nn.Module):
    """Upsample from level ``hi`` to the resolution of level ``lo`` and fuse skips ``lo..hi``."""

    def __init__(self, cfg: ModelConfig, bins: int, lo: int, hi: int):
        super().__init__()
        g, nb = cfg.g, cfg.n_band
        self.lo, self.hi = lo, hi
        factor = 2 ** (hi - lo + 1)
        self.up = nn.ConvTranspose2d((hi + 1) * g, lo * g, (1, factor), stride=(1, factor), groups=nb)
        self.skip_proj = nn.ModuleList(nn.Conv2d(n * g, lo * g, 1) for n in range(lo, hi + 1))
        self.block = SplitTFCBlock(lo * g, cfg.n_split_dec, nb, bins, cfg.k_inner, cfg.tdf_factor)

    def forward(self, x: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        frames = skips[self.lo - 1].shape[-1]
        x = self.up(x)
        x = F.pad(x, (0, max(0, frames - x.shape[-1])))[..., :frames]
        for n, proj in zip(range(self.lo, self.hi + 1), self.skip_proj):
            s = proj(skips[n - 1])
            x = x + s.repeat_interleave(2 ** (n - self.lo), dim=-1)[..., :frames]
        return self.block(x)


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig, bins: int):
        super().__init__()
        levels = np.arange(cfg.n_enc, 0, -1)
        self.stages = nn.ModuleList(
            DecoderStage(cfg, bins, lo=int(group[-1]), hi=int(group[0])) for group in np.array_split(levels, cfg.n_dec)
        )

    def forward(self, x: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        if len(skips) != self.stages[0].hi:
            raise ValueError(f"expected {self.stages[0].hi} skip tensors, got {len(skips)}")
        for stage in self.stages:
            x = stage(x, skips)
        return x


class BandSplitSeparator(nn.Module):
    """Single-stem separator mapping a packed mixture spectrogram to a stem spectrogram."""

    def __init__(self, cfg: ModelConfig, n_bins: int = 2048):
        super().__init__()
        cfg.check_bins(n_bins)
        self.cfg = cfg
        self.n_bins = n_bins
        nb, g = cfg.n_band, cfg.g
        bins = n_bins // nb
        self.lift_in = SplitConv(cfg.c_in * nb, g, nb, cfg.k_outer)
        self.encoder = Encoder(cfg, bins)
        self.mid = SplitTFCBlock((cfg.n_enc + 1) * g, cfg.n_split_enc, nb, bins, cfg.k_inner, cfg.tdf_factor)
        self.seq = DualPathRoPE((cfg.n_enc + 1) * g, cfg.seq_dim, cfg.n_rope, cfg.heads, cfg.ffn_mult, cfg.dropout)
        self.decoder = Decoder(cfg, bins)
        self.lift_out = SplitConv(g, cfg.c_in * nb, nb, cfg.k_outer)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        unbatched = x.dim() == 3
        if unbatched:
            x = x[None]
        if x.shape[-3] != self.cfg.c_in or x.shape[-2] != self.n_bins:
            raise ValueError(f"expected (B, {self.cfg.c_in}, {self.n_bins}, T), got {tuple(x.shape)}")
        nb = self.cfg.n_band
        h = self.lift_in(band_split(x, nb))
        state = self.encoder(h)
        h = self.seq(self.mid(state.bottleneck))
        h = self.lift_out(self.decoder(h, state.skips))
        out = band_merge(h, nb, self.cfg.c_in)
        return out[0] if unbatched else out

    def separate_spec(self, spec: ComplexSpectrogram) -> ComplexSpectrogram:
        return ComplexSpectrogram(self(spec.data), spec.cfg, spec.original_length)


def count_parameters(cfg: ModelConfig, n_bins: int = 2048) -> int:
    """Exact trainable scalar count of a single-stem model (built on the meta device)."""
    with torch.device("meta"):
        model = BandSplitSeparator(cfg, n_bins)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
