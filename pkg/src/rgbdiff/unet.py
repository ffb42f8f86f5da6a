"""Conditioned U-Net denoiser.

A small two-resolution U-Net sized for CPU training: residual blocks with
timestep injection plus one cross-attention block per resolution for text
conditioning. The input is the noisy 4-channel latent, optionally
concatenated with a 4-channel conditioning latent (8-channel variant used
for super-resolution); the output is always a 4-channel noise prediction.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .exceptions import ConfigError
from .text import TextCondition


def _norm(channels: int) -> nn.GroupNorm:
    groups = 4 if channels % 4 == 0 else 1
    return nn.GroupNorm(groups, channels)


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        if dim % 2:
            raise ConfigError(f"time embedding dim must be even, got {dim}")
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / max(half - 1, 1)
        )
        args = t[:, None] * freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, temb_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb_proj = nn.Linear(temb_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.temb_proj(torch.nn.functional.silu(temb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    """Single-head cross-attention from spatial tokens to the text context."""

    def __init__(self, channels: int, context_dim: int):
        super().__init__()
        self.norm = _norm(channels)
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(context_dim, channels, bias=False)
        self.to_v = nn.Linear(context_dim, channels, bias=False)
        self.to_out = nn.Linear(channels, channels)
        self.scale = channels**-0.5

    def forward(self, x, context, context_mask):
        b, c, h, w = x.shape
        tokens = self.norm(x).reshape(b, c, h * w).transpose(1, 2)  # (B, HW, C)
        q = self.to_q(tokens)
        k = self.to_k(context)
        v = self.to_v(context)
        scores = torch.bmm(q, k.transpose(1, 2)) * self.scale  # (B, HW, L)
        scores = scores.masked_fill(~context_mask[:, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = self.to_out(torch.bmm(attn, v))  # (B, HW, C)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class CondUNet(nn.Module):
    """Denoiser backbone. ``in_channels`` is 4 (generation) or 8 (SR by
    latent concatenation); the prediction always has 4 channels."""

    def __init__(
        self,
        in_channels: int = 4,
        out_channels: int = 4,
        base_width: int = 32,
        channel_mult: tuple = (1, 2),
        context_dim: int = 32,
        attn_levels: tuple = (0, 1),
        temb_dim: int | None = None,
    ):
        super().__init__()
        if in_channels not in (4, 8):
            raise ConfigError(f"in_channels must be 4 or 8, got {in_channels}")
        if out_channels != 4:
            raise ConfigError(f"out_channels must be 4, got {out_channels}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.context_dim = context_dim
        widths = [base_width * m for m in channel_mult]
        temb_dim = temb_dim or 2 * base_width
        self.time_embed = SinusoidalTimeEmbedding(temb_dim)
        self.time_mlp = nn.Sequential(
            nn.Linear(temb_dim, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim)
        )
        self.conv_in = nn.Conv2d(in_channels, widths[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_attns = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        prev = widths[0]
        for i, w in enumerate(widths):
            self.down_blocks.append(ResBlock(prev, w, temb_dim))
            self.down_attns.append(
                CrossAttention(w, context_dim) if i in attn_levels else None
            )
            self.downsamples.append(
                nn.Conv2d(w, w, 3, stride=2, padding=1) if i < len(widths) - 1 else None
            )
            prev = w

        self.mid_block = ResBlock(prev, prev, temb_dim)

        self.up_blocks = nn.ModuleList()
        self.up_attns = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i in reversed(range(len(widths))):
            w = widths[i]
            self.up_blocks.append(ResBlock(prev + w, w, temb_dim))
            self.up_attns.append(
                CrossAttention(w, context_dim) if i in attn_levels else None
            )
            self.upsamples.append(
                nn.Conv2d(widths[i + 1], widths[i + 1], 3, padding=1)
                if i < len(widths) - 1 else None
            )
            prev = w

        self.norm_out = _norm(widths[0])
        self.conv_out = nn.Conv2d(widths[0], out_channels, 3, padding=1)

    def forward(self, z, t, context, context_mask):
        temb = self.time_mlp(self.time_embed(t.to(z.dtype)))
        h = self.conv_in(z)
        skips = []
        for block, attn, down in zip(self.down_blocks, self.down_attns, self.downsamples):
            h = block(h, temb)
            if attn is not None:
                h = attn(h, context, context_mask)
            skips.append(h)
            if down is not None:
                h = down(h)
        h = self.mid_block(h, temb)
        for i, (block, attn, up) in enumerate(
            zip(self.up_blocks, self.up_attns, self.upsamples)
        ):
            if up is not None:
                h = up(torch.nn.functional.interpolate(h, scale_factor=2, mode="nearest"))
            h = block(torch.cat([h, skips[-(i + 1)]], dim=1), temb)
            if attn is not None:
                h = attn(h, context, context_mask)
        return self.conv_out(torch.nn.functional.silu(self.norm_out(h)))


def pack_conditions(
    conds: list[TextCondition], context_dim: int, dtype=torch.float32
) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad a batch of token embeddings to a common length; returns (context, mask)."""
    if any(c.dim != context_dim for c in conds):
        dims = sorted({c.dim for c in conds})
        raise ConfigError(f"condition dims {dims} do not match context_dim {context_dim}")
    max_len = max(c.length for c in conds)
    ctx = torch.zeros(len(conds), max_len, context_dim, dtype=dtype)
    mask = torch.zeros(len(conds), max_len, dtype=torch.bool)
    for i, c in enumerate(conds):
        emb = torch.from_numpy(np.ascontiguousarray(c.tokens_embedding)).to(dtype)
        ctx[i, : c.length] = emb
        mask[i, : c.length] = True
    return ctx, mask
