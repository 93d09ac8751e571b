"""Transformer building blocks shared by the encoders, fusion, and decoder.

Pre-norm residual blocks throughout; all modules are built in double
precision for desk-scale numerical checks.
"""

from __future__ import annotations

import math

import torch
from torch import nn

NEG_INF = -1e4  # attention mask fill; exp() underflows to 0 in the softmax

DTYPE = torch.float64


class MultiHeadAttention(nn.Module):
    """Standard scaled dot-product attention over (B, L, C) inputs."""

    def __init__(self, dim: int, n_heads: int, kv_dim: int | None = None):
        super().__init__()
        if dim % n_heads != 0:
            raise ValueError(f"dim {dim} not divisible by n_heads {n_heads}")
        kv_dim = kv_dim if kv_dim is not None else dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.q_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.k_proj = nn.Linear(kv_dim, dim, dtype=DTYPE)
        self.v_proj = nn.Linear(kv_dim, dim, dtype=DTYPE)
        self.out_proj = nn.Linear(dim, dim, dtype=DTYPE)

    def forward(self, q: torch.Tensor, kv: torch.Tensor,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        b, lq, _ = q.shape
        lk = kv.shape[1]
        qh = self.q_proj(q).view(b, lq, self.n_heads, self.head_dim).transpose(1, 2)
        kh = self.k_proj(kv).view(b, lk, self.n_heads, self.head_dim).transpose(1, 2)
        vh = self.v_proj(kv).view(b, lk, self.n_heads, self.head_dim).transpose(1, 2)
        attn = (qh @ kh.transpose(-2, -1)) * self.scale  # (b, heads, lq, lk)
        if attn_mask is not None:
            attn = attn + attn_mask
        attn = attn.softmax(dim=-1)
        out = (attn @ vh).transpose(1, 2).reshape(b, lq, -1)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, dim: int, ratio: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, dim * ratio, dtype=DTYPE),
            nn.GELU(),
            nn.Linear(dim * ratio, dim, dtype=DTYPE),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class SelfAttentionBlock(nn.Module):
    """Pre-norm self-attention + feed-forward with residuals."""

    def __init__(self, dim: int, n_heads: int, ffn_ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, dtype=DTYPE)
        self.attn = MultiHeadAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim, dtype=DTYPE)
        self.ffn = FeedForward(dim, ffn_ratio)

    def forward(self, x: torch.Tensor,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, attn_mask=attn_mask)
        x = x + self.ffn(self.norm2(x))
        return x


class CrossAttentionBlock(nn.Module):
    """Pre-norm cross-attention + feed-forward; queries attend to context."""

    def __init__(self, dim: int, n_heads: int, ffn_ratio: int,
                 context_dim: int | None = None):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim, dtype=DTYPE)
        self.norm_kv = nn.LayerNorm(context_dim or dim, dtype=DTYPE)
        self.attn = MultiHeadAttention(dim, n_heads, kv_dim=context_dim)
        self.norm2 = nn.LayerNorm(dim, dtype=DTYPE)
        self.ffn = FeedForward(dim, ffn_ratio)

    def forward(self, x: torch.Tensor, context: torch.Tensor,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attn(self.norm_q(x), self.norm_kv(context), attn_mask=attn_mask)
        x = x + self.ffn(self.norm2(x))
        return x


def key_padding_mask(pad: torch.Tensor) -> torch.Tensor:
    """(B, L) bool pad flags -> additive mask (B, 1, 1, L) for attention."""
    return pad[:, None, None, :].to(DTYPE) * NEG_INF


def causal_mask(length: int) -> torch.Tensor:
    """Additive (length, length) mask hiding future positions."""
    m = torch.full((length, length), NEG_INF, dtype=DTYPE)
    return torch.triu(m, diagonal=1)
