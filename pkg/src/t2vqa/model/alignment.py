"""Text-video alignment branch.

A frozen patch-transformer turns each sampled frame into patch tokens.
A small text encoder then reads the prompt, cross-attends to one frame
at a time, and mean-pools its token states into a single vector per
frame.  Stacking those vectors gives the alignment feature
(n_frames, align_dim) consumed by the fusion stage.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import AlignmentFeature, ModelConfig
from .layers import DTYPE, CrossAttentionBlock, SelfAttentionBlock


class FrameEncoder(nn.Module):
    """Per-frame patch transformer.  Kept frozen during training."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.align_dim
        p = config.patch_size
        self.patch_embed = nn.Conv2d(3, d, kernel_size=p, stride=p, dtype=DTYPE)
        side = config.frame_size // p
        self.n_patches = side * side
        self.pos_embed = nn.Parameter(torch.zeros(1, self.n_patches, d, dtype=DTYPE))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            SelfAttentionBlock(d, config.n_heads, config.ffn_ratio)
            for _ in range(config.n_frame_blocks)
        )
        self.norm = nn.LayerNorm(d, dtype=DTYPE)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """(n_frames, 3, H, W) -> patch tokens (n_frames, P, align_dim)."""
        x = self.patch_embed(frames.to(DTYPE))  # (n, d, side, side)
        x = x.flatten(2).transpose(1, 2) + self.pos_embed
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


class TextEncoder(nn.Module):
    """Prompt reader that grounds its tokens in one frame's patches."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.align_dim
        self.token_embed = nn.Embedding(config.vocab_size, d, dtype=DTYPE)
        self.pos_embed = nn.Parameter(
            torch.zeros(1, config.max_text_len, d, dtype=DTYPE))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.self_blocks = nn.ModuleList(
            SelfAttentionBlock(d, config.n_heads, config.ffn_ratio)
            for _ in range(config.n_text_blocks)
        )
        self.cross_blocks = nn.ModuleList(
            CrossAttentionBlock(d, config.n_heads, config.ffn_ratio)
            for _ in range(config.n_text_blocks)
        )
        self.norm = nn.LayerNorm(d, dtype=DTYPE)
        self.max_text_len = config.max_text_len

    def forward(self, text_ids: torch.Tensor,
                frame_tokens: torch.Tensor) -> torch.Tensor:
        """Pool prompt states grounded in each frame.

        text_ids: (L,) int64; frame_tokens: (n_frames, P, d).
        Returns (n_frames, d): one pooled text state per frame.
        """
        if text_ids.ndim != 1:
            raise ValueError("text_ids must be a 1-D id sequence")
        length = text_ids.shape[0]
        if length > self.max_text_len:
            text_ids = text_ids[: self.max_text_len]
            length = self.max_text_len
        n = frame_tokens.shape[0]
        x = self.token_embed(text_ids)[None] + self.pos_embed[:, :length]
        x = x.expand(n, -1, -1)  # same prompt against every frame
        for self_block, cross_block in zip(self.self_blocks, self.cross_blocks):
            x = self_block(x)
            x = cross_block(x, frame_tokens)
        return self.norm(x).mean(dim=1)


class AlignmentEncoder(nn.Module):
    """Bundles the frozen frame tower and the text tower."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.frame_encoder = FrameEncoder(config)
        self.text_encoder = TextEncoder(config)

    def forward(self, text_ids: torch.Tensor,
                frames: torch.Tensor) -> AlignmentFeature:
        patch_tokens = self.frame_encoder(frames)
        pooled = self.text_encoder(text_ids, patch_tokens)
        return AlignmentFeature(tokens=pooled)
