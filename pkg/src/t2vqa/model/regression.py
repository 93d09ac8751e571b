"""Score regression through a frozen causal decoder.

Fused video tokens are projected into the decoder's embedding space and
prepended to the embedded rating instruction.  The decoder runs causally
and the vocabulary logits at the final position are restricted to the
five reserved level tokens; the predicted score is the expectation of
the levels 1..5 under a softmax over exactly those five logits.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import LEVEL_WEIGHTS, ModelConfig
from .layers import DTYPE, SelfAttentionBlock, causal_mask


def level_expectation(lam: torch.Tensor) -> torch.Tensor:
    """Eq-style weighted softmax readout; lam is the (5,) level logits."""
    if lam.shape != (5,):
        raise ValueError(f"expected 5 level logits, got shape {tuple(lam.shape)}")
    weights = torch.tensor(LEVEL_WEIGHTS, dtype=lam.dtype)
    return (lam.softmax(dim=-1) * weights).sum()


class QualityDecoder(nn.Module):
    """Causal transformer over [projected video tokens; instruction].

    Kept frozen during training; only the projection feeding it learns.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.decoder_dim
        self.token_embed = nn.Embedding(config.vocab_size, d, dtype=DTYPE)
        self.max_len = config.n_fidelity_tokens() + config.max_text_len
        self.pos_embed = nn.Parameter(
            torch.zeros(1, self.max_len, d, dtype=DTYPE))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            SelfAttentionBlock(d, config.n_heads, config.ffn_ratio)
            for _ in range(config.n_decoder_blocks)
        )
        self.norm = nn.LayerNorm(d, dtype=DTYPE)
        self.lm_head = nn.Linear(d, config.vocab_size, dtype=DTYPE)

    def forward(self, prefix: torch.Tensor,
                instruction_ids: torch.Tensor) -> torch.Tensor:
        """prefix (S, d) + ids (L,) -> vocabulary logits at final position."""
        emb = self.token_embed(instruction_ids)[None]
        x = torch.cat([prefix[None], emb], dim=1)
        length = x.shape[1]
        if length > self.max_len:
            raise ValueError(
                f"decoder input length {length} exceeds capacity {self.max_len}")
        x = x + self.pos_embed[:, :length]
        mask = causal_mask(length)
        for block in self.blocks:
            x = block(x, attn_mask=mask)
        x = self.norm(x)
        return self.lm_head(x[0, -1])


class LevelRegressor(nn.Module):
    """Trainable projection into the frozen decoder plus level readout."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.proj = nn.Linear(config.fusion_dim, config.decoder_dim, dtype=DTYPE)
        self.decoder = QualityDecoder(config)
        self.register_buffer(
            "level_ids", torch.tensor(config.level_token_ids, dtype=torch.int64))

    def forward(self, fused: torch.Tensor,
                instruction_ids: torch.Tensor) -> torch.Tensor:
        """Returns the (5,) level-token logits."""
        logits = self.decoder(self.proj(fused), instruction_ids)
        return logits[self.level_ids]
