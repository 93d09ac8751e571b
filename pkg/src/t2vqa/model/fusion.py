"""Fusion of the fidelity token grid with alignment features.

Fidelity tokens are the sequence being refined; alignment vectors act
as cross-attention context on alternating blocks.  Output keeps the
fidelity sequence length at fusion width.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import AlignmentFeature, FidelityFeature, ModelConfig
from .layers import DTYPE, CrossAttentionBlock, SelfAttentionBlock


class FusionBlock(nn.Module):
    def __init__(self, config: ModelConfig, with_cross: bool):
        super().__init__()
        d = config.fusion_dim
        self.self_block = SelfAttentionBlock(d, config.n_heads, config.ffn_ratio)
        self.cross_block = (
            CrossAttentionBlock(d, config.n_heads, config.ffn_ratio)
            if with_cross else None)

    def forward(self, x: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        x = self.self_block(x)
        if self.cross_block is not None:
            x = self.cross_block(x, context)
        return x


class FusionEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.fusion_dim
        self.fidelity_proj = nn.Linear(config.fidelity_dim, d, dtype=DTYPE)
        self.align_proj = nn.Linear(config.align_dim, d, dtype=DTYPE)
        self.blocks = nn.ModuleList(
            FusionBlock(config, with_cross=(i % 2 == config.cross_attn_parity))
            for i in range(config.n_fusion_blocks)
        )
        self.norm = nn.LayerNorm(d, dtype=DTYPE)

    def forward(self, fidelity: FidelityFeature,
                alignment: AlignmentFeature) -> torch.Tensor:
        """Returns fused tokens (S, fusion_dim)."""
        x = self.fidelity_proj(fidelity.tokens)[None]
        context = self.align_proj(alignment.tokens)[None]
        for block in self.blocks:
            x = block(x, context)
        return self.norm(x[0])
