"""Full assessment network.

Wires the alignment branch, fidelity branch, fusion stage, and the
frozen-decoder regressor into one module.  Construction is seeded so
two networks built from the same config hold identical weights.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence

import torch
from torch import nn

from .alignment import AlignmentEncoder
from .config import AlignmentFeature, FidelityFeature, LevelLogits, ModelConfig, QualityScore
from .fidelity import FidelityEncoder
from .fusion import FusionEncoder
from .regression import LevelRegressor, level_expectation
from .tokenizer import Tokenizer

# Pretrained towers stay fixed; everything else learns.
FROZEN_GROUPS = ("frame_encoder", "decoder")

PARAMETER_GROUPS = (
    "frame_encoder", "text_encoder", "fidelity_encoder",
    "fusion", "decoder_proj", "decoder",
)


class Network(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.tokenizer = Tokenizer(config.vocab_size)
        if tuple(self.tokenizer.level_ids) != tuple(config.level_token_ids):
            raise ValueError(
                "config level_token_ids must match the tokenizer's reserved ids")
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.alignment = AlignmentEncoder(config)
            self.fidelity = FidelityEncoder(config)
            self.fusion = FusionEncoder(config)
            self.regressor = LevelRegressor(config)
        instr = self.tokenizer.encode(config.instruction_text)
        self.register_buffer(
            "instruction_ids",
            torch.tensor(instr[: config.max_text_len], dtype=torch.int64))
        for group in FROZEN_GROUPS:
            self.group_module(group).requires_grad_(False)

    def group_module(self, group: str) -> nn.Module:
        modules = {
            "frame_encoder": self.alignment.frame_encoder,
            "text_encoder": self.alignment.text_encoder,
            "fidelity_encoder": self.fidelity,
            "fusion": self.fusion,
            "decoder_proj": self.regressor.proj,
            "decoder": self.regressor.decoder,
        }
        if group not in modules:
            raise KeyError(f"unknown parameter group {group!r}")
        return modules[group]

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        """Named parameters of every group, names relative to the group."""
        return {
            group: list(self.group_module(group).named_parameters())
            for group in PARAMETER_GROUPS
        }

    def trainable_parameters(self) -> Iterator[nn.Parameter]:
        return (p for p in self.parameters() if p.requires_grad)

    def encode_text(self, text: str) -> torch.Tensor:
        ids = self.tokenizer.encode(text)[: self.config.max_text_len]
        return torch.tensor(ids, dtype=torch.int64)

    def encode_alignment(self, text_ids: torch.Tensor,
                         frames: torch.Tensor) -> AlignmentFeature:
        return self.alignment(text_ids, frames)

    def encode_fidelity(self, frames: torch.Tensor) -> FidelityFeature:
        return self.fidelity(frames)

    def fuse(self, fidelity: FidelityFeature,
             alignment: AlignmentFeature) -> torch.Tensor:
        fused = self.fusion(fidelity, alignment)
        if self.config.pool_fused == "mean":
            fused = fused.mean(dim=0, keepdim=True)
        return fused

    def regress(self, fused: torch.Tensor) -> torch.Tensor:
        """Fused tokens -> (5,) level logits."""
        return self.regressor(fused, self.instruction_ids)

    def score(self, text_ids: torch.Tensor, frames: torch.Tensor) -> torch.Tensor:
        """Differentiable predicted score in [1, 5] (0-dim tensor)."""
        alignment = self.encode_alignment(text_ids, frames)
        fidelity = self.encode_fidelity(frames)
        fused = self.fuse(fidelity, alignment)
        return level_expectation(self.regress(fused))

    def level_logits(self, text: str, frames: torch.Tensor) -> LevelLogits:
        with torch.no_grad():
            alignment = self.encode_alignment(self.encode_text(text), frames)
            fidelity = self.encode_fidelity(frames)
            lam = self.regress(self.fuse(fidelity, alignment))
        return LevelLogits(lam=tuple(float(v) for v in lam))

    def predict(self, text: str, frames: torch.Tensor) -> QualityScore:
        with torch.no_grad():
            value = self.score(self.encode_text(text), frames)
        return QualityScore(value=float(value))


def scores_for_batch(network: Network, items: Sequence[tuple[torch.Tensor, torch.Tensor]]) -> torch.Tensor:
    """Stack per-sample scores into one differentiable (B,) tensor."""
    return torch.stack([network.score(ids, frames) for ids, frames in items])
