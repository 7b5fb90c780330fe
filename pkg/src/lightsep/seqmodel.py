"""Dual-path transformer with rotary position embeddings.

The bottleneck tensor ``(batch, channels, bins, frames)`` is projected to
``seq_dim`` features and passed through blocks that attend along time and then
along frequency, each followed by a feed-forward layer.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


def rope_angles(positions: torch.Tensor, head_dim: int, base: float = 10000.0) -> torch.Tensor:
    if head_dim % 2:
        raise ValueError(f"rotary embeddings need an even head_dim, got {head_dim}")
    inv_freq = base ** (-torch.arange(0, head_dim, 2, dtype=torch.float64) / head_dim)
    return positions.to(torch.float64)[..., None] * inv_freq


def rope_rotate(x: torch.Tensor, positions: torch.Tensor, base: float = 10000.0) -> torch.Tensor:
    """Rotate coordinate pairs ``(2i, 2i+1)`` of ``x[..., pos, :]`` by ``pos * base**(-2i/d)``.

    ``positions`` broadcasts against ``x.shape[:-1]``.
    """
    angles = rope_angles(positions, x.shape[-1], base)
    cos, sin = angles.cos().to(x.dtype), angles.sin().to(x.dtype)
    even, odd = x[..., 0::2], x[..., 1::2]
    return torch.stack((even * cos - odd * sin, even * sin + odd * cos), dim=-1).flatten(-2)


class AxisAttention(nn.Module):
    """Pre-norm multi-head self-attention along one axis of ``(B, F, T, D)``, with residual."""

    def __init__(self, dim: int, heads: int, axis: str, dropout: float = 0.0):
        super().__init__()
        if axis not in ("time", "frequency"):
            raise ValueError(f"axis must be 'time' or 'frequency', got {axis!r}")
        if dim % heads or (dim // heads) % 2:
            raise ValueError(f"dim={dim} must split into {heads} heads of even size")
        self.axis = axis
        self.heads = heads
        self.dropout = dropout
        self.norm = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim, bias=False)
        self.out = nn.Linear(dim, dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[-1] != self.norm.normalized_shape[0]:
            raise ValueError(f"expected (B, F, T, {self.norm.normalized_shape[0]}), got {tuple(x.shape)}")
        seq = x if self.axis == "time" else x.transpose(1, 2)
        b, other, length, dim = seq.shape
        h = self.norm(seq).reshape(b * other, length, dim)
        q, k, v = self.qkv(h).reshape(b * other, length, 3, self.heads, dim // self.heads).permute(2, 0, 3, 1, 4)
        pos = torch.arange(length, device=x.device)
        q, k = rope_rotate(q, pos), rope_rotate(k, pos)
        attn = F.scaled_dot_product_attention(q, k, v, dropout_p=self.dropout if self.training else 0.0)
        attn = attn.transpose(1, 2).reshape(b, other, length, dim)
        out = seq + self.out(attn)
        return out if self.axis == "time" else out.transpose(1, 2)


class FeedForward(nn.Module):
    def __init__(self, dim: int, mult: int = 4, dropout: float = 0.0):
        super().__init__()
        self.net = nn.Sequential(
            nn.LayerNorm(dim),
            nn.Linear(dim, dim * mult),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(dim * mult, dim),
        )

    def forward(self, x):
        return x + self.net(x)


class RoPEBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_mult: int = 4, dropout: float = 0.0):
        super().__init__()
        self.time_attn = AxisAttention(dim, heads, "time", dropout)
        self.time_ff = FeedForward(dim, ffn_mult, dropout)
        self.freq_attn = AxisAttention(dim, heads, "frequency", dropout)
        self.freq_ff = FeedForward(dim, ffn_mult, dropout)

    def forward(self, x):
        x = self.time_ff(self.time_attn(x))
        return self.freq_ff(self.freq_attn(x))


class DualPathRoPE(nn.Module):
    """1x1 projection to ``seq_dim``, ``n_blocks`` RoPE blocks, projection back."""

    def __init__(self, channels: int, seq_dim: int, n_blocks: int, heads: int, ffn_mult: int = 4, dropout: float = 0.0):
        super().__init__()
        self.proj_in = nn.Conv2d(channels, seq_dim, 1)
        self.blocks = nn.ModuleList(RoPEBlock(seq_dim, heads, ffn_mult, dropout) for _ in range(n_blocks))
        self.proj_out = nn.Conv2d(seq_dim, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.proj_in(x).permute(0, 2, 3, 1)  # (B, F, T, D)
        for block in self.blocks:
            h = block(h)
        return self.proj_out(h.permute(0, 3, 1, 2))
