"""Low-level fidelity branch.

Frames are embedded as space-time tubelets, then refined by window
attention over the (t, h, w) token grid.  Blocks alternate between
regular and half-window-shifted partitions; shifted blocks roll the
grid and mask attention across wrap-around seams so only true
neighbours interact.  Output is the flattened token grid
(S, fidelity_dim).
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .config import FidelityFeature, ModelConfig
from .layers import DTYPE, NEG_INF, FeedForward, MultiHeadAttention


def _axis_regions(dim: int, window: int, shift: int) -> list[slice]:
    if shift == 0:
        return [slice(0, dim)]
    return [slice(0, dim - window), slice(dim - window, dim - shift),
            slice(dim - shift, dim)]


def _region_image(dims: tuple[int, int, int], window: tuple[int, int, int],
                  shift: tuple[int, int, int]) -> torch.Tensor:
    """Region ids in the rolled frame; equal ids may attend."""
    img = torch.zeros(dims, dtype=torch.int64)
    count = 0
    for ts in _axis_regions(dims[0], window[0], shift[0]):
        for hs in _axis_regions(dims[1], window[1], shift[1]):
            for ws in _axis_regions(dims[2], window[2], shift[2]):
                img[ts, hs, ws] = count
                count += 1
    return img


def _window_partition(x: torch.Tensor,
                      window: tuple[int, int, int]) -> torch.Tensor:
    """(T, H, W, C) -> (n_windows, window_volume, C)."""
    t, h, w, c = x.shape
    wt, wh, ww = window
    x = x.view(t // wt, wt, h // wh, wh, w // ww, ww, c)
    x = x.permute(0, 2, 4, 1, 3, 5, 6)
    return x.reshape(-1, wt * wh * ww, c)


def _window_reverse(x: torch.Tensor, window: tuple[int, int, int],
                    dims: tuple[int, int, int]) -> torch.Tensor:
    """Inverse of :func:`_window_partition`."""
    t, h, w = dims
    wt, wh, ww = window
    x = x.view(t // wt, h // wh, w // ww, wt, wh, ww, -1)
    x = x.permute(0, 3, 1, 4, 2, 5, 6)
    return x.reshape(t, h, w, -1)


class WindowBlock(nn.Module):
    """Pre-norm window attention + feed-forward on the token grid."""

    def __init__(self, config: ModelConfig, shifted: bool):
        super().__init__()
        d = config.fidelity_dim
        self.window = config.window_size
        self.shift = tuple(
            (w // 2 if shifted and w > 1 else 0) for w in self.window)
        self.norm1 = nn.LayerNorm(d, dtype=DTYPE)
        self.attn = MultiHeadAttention(d, config.n_heads)
        self.norm2 = nn.LayerNorm(d, dtype=DTYPE)
        self.ffn = FeedForward(d, config.ffn_ratio)

    def forward(self, x: torch.Tensor, pad_flags: torch.Tensor) -> torch.Tensor:
        """x: (T, H, W, C) padded grid; pad_flags: (T, H, W) bool."""
        dims = x.shape[:3]
        shift = self.shift
        h = self.norm1(x)
        if any(shift):
            h = torch.roll(h, shifts=tuple(-s for s in shift), dims=(0, 1, 2))
        regions = _region_image(dims, self.window, shift)
        rolled_pad = pad_flags
        if any(shift):
            rolled_pad = torch.roll(
                pad_flags, shifts=tuple(-s for s in shift), dims=(0, 1, 2))
        regions = regions.masked_fill(rolled_pad, -1)
        win_regions = _window_partition(
            regions[..., None].to(DTYPE), self.window).squeeze(-1)
        mask = torch.where(
            win_regions[:, :, None] == win_regions[:, None, :], 0.0, NEG_INF)
        mask = mask.to(DTYPE)[:, None, :, :]  # broadcast over heads
        windows = _window_partition(h, self.window)
        windows = self.attn(windows, windows, attn_mask=mask)
        h = _window_reverse(windows, self.window, dims)
        if any(shift):
            h = torch.roll(h, shifts=shift, dims=(0, 1, 2))
        x = x + h
        x = x + self.ffn(self.norm2(x))
        return x


class FidelityEncoder(nn.Module):
    """Tubelet embedding plus alternating window-attention blocks."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.fidelity_dim
        self.patch = config.fidelity_patch
        self.window = config.window_size
        self.grid = config.token_grid()
        self.embed = nn.Conv3d(3, d, kernel_size=self.patch, stride=self.patch,
                               dtype=DTYPE)
        self.pos_embed = nn.Parameter(
            torch.zeros(*self.grid, d, dtype=DTYPE))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            WindowBlock(config, shifted=(i % 2 == 1))
            for i in range(config.n_fidelity_blocks)
        )
        self.norm = nn.LayerNorm(d, dtype=DTYPE)

    def forward(self, frames: torch.Tensor) -> FidelityFeature:
        """(n_frames, 3, H, W) -> flattened grid tokens (S, fidelity_dim)."""
        video = frames.to(DTYPE).permute(1, 0, 2, 3)[None]  # (1, 3, T, H, W)
        pt, ph, pw = self.patch
        _, _, t, hh, ww = video.shape
        pad = (0, -ww % pw, 0, -hh % ph, 0, -t % pt)
        if any(pad):
            video = F.pad(video, pad)
        x = self.embed(video)[0].permute(1, 2, 3, 0)  # (t, h, w, d)
        if x.shape[:3] != self.grid:
            raise ValueError(
                f"token grid {tuple(x.shape[:3])} does not match "
                f"configured grid {self.grid}")
        x = x + self.pos_embed
        # config validation guarantees the window tiles the grid exactly,
        # so masks only arise from shifted-window boundaries
        pad_flags = torch.zeros(self.grid, dtype=torch.bool)
        for block in self.blocks:
            x = block(x, pad_flags)
        x = self.norm(x.reshape(-1, x.shape[-1]))
        return FidelityFeature(tokens=x)
