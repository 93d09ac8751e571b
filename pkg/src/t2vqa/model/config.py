"""Model configuration and the typed feature/score containers.

The default configuration is the toy scale used throughout the test
suite (32 px frames, small dims); the full-scale settings (224 px frames,
12 fusion blocks) are reachable through the same fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Literal

import torch

DEFAULT_INSTRUCTION = "Please rate the quality of this video."

LEVEL_WEIGHTS = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class ModelConfig:
    n_frames: int = 8
    frame_size: int = 32          # 224 at full scale
    patch_size: int = 8           # alignment frame-encoder patches
    align_dim: int = 32           # d_a
    fidelity_dim: int = 32        # d_s
    fidelity_patch: tuple[int, int, int] = (2, 4, 4)   # tubelet (t, h, w)
    window_size: tuple[int, int, int] = (2, 4, 4)      # attention window (t, h, w)
    n_fidelity_blocks: int = 2
    fusion_dim: int = 32          # d_f
    n_fusion_blocks: int = 2      # 12 at full scale
    cross_attn_parity: Literal[0, 1] = 0   # blocks i with i % 2 == parity get cross-attention
    decoder_dim: int = 64
    n_decoder_blocks: int = 2
    n_frame_blocks: int = 1
    n_text_blocks: int = 1
    n_heads: int = 4
    ffn_ratio: int = 2
    vocab_size: int = 512
    max_text_len: int = 64
    level_token_ids: tuple[int, int, int, int, int] = (2, 3, 4, 5, 6)
    instruction_text: str = DEFAULT_INSTRUCTION
    pool_fused: Literal["none", "mean"] = "none"
    seed: int = 0

    def validate(self) -> None:
        dims = {
            "n_frames": self.n_frames, "frame_size": self.frame_size,
            "patch_size": self.patch_size, "align_dim": self.align_dim,
            "fidelity_dim": self.fidelity_dim, "fusion_dim": self.fusion_dim,
            "decoder_dim": self.decoder_dim, "n_heads": self.n_heads,
            "vocab_size": self.vocab_size, "max_text_len": self.max_text_len,
            "n_frame_blocks": self.n_frame_blocks, "n_text_blocks": self.n_text_blocks,
            "n_fidelity_blocks": self.n_fidelity_blocks,
            "n_decoder_blocks": self.n_decoder_blocks, "ffn_ratio": self.ffn_ratio,
        }
        for name, value in dims.items():
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.n_fusion_blocks < 1:
            raise ValueError("n_fusion_blocks must be >= 1")
        if len(set(self.level_token_ids)) != 5:
            raise ValueError("level_token_ids must be 5 distinct ids")
        if any(not (0 <= t < self.vocab_size) for t in self.level_token_ids):
            raise ValueError("level_token_ids must lie inside the vocabulary")
        if any(w < 1 for w in self.window_size) or any(p < 1 for p in self.fidelity_patch):
            raise ValueError("window_size and fidelity_patch entries must be >= 1")
        if self.frame_size % self.patch_size != 0:
            raise ValueError("patch_size must divide frame_size")
        grid = self.token_grid()
        if any(g % w != 0 for g, w in zip(grid, self.window_size)):
            raise ValueError(
                f"window_size {self.window_size} must divide the fidelity "
                f"token grid {grid}")
        if self.cross_attn_parity not in (0, 1):
            raise ValueError("cross_attn_parity must be 0 or 1")
        if self.pool_fused not in ("none", "mean"):
            raise ValueError("pool_fused must be 'none' or 'mean'")

    def token_grid(self) -> tuple[int, int, int]:
        """Fidelity token grid (t, h, w) after tubelet embedding (ceil division)."""
        pt, ph, pw = self.fidelity_patch
        return (
            -(-self.n_frames // pt),
            -(-self.frame_size // ph),
            -(-self.frame_size // pw),
        )

    def n_fidelity_tokens(self) -> int:
        t, h, w = self.token_grid()
        return t * h * w

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        kwargs = dict(obj)
        for key in ("fidelity_patch", "window_size", "level_token_ids"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class AlignmentFeature:
    """One pooled text-frame token per sampled frame: (n_frames, d_a)."""
    tokens: torch.Tensor


@dataclass(frozen=True)
class FidelityFeature:
    """Flattened spatiotemporal tokens: (S, d_s)."""
    tokens: torch.Tensor


@dataclass(frozen=True)
class LevelLogits:
    """Logits of the five level tokens at the read-out position."""
    lam: tuple[float, float, float, float, float]


@dataclass(frozen=True)
class QualityScore:
    value: float

    def __post_init__(self):
        if not (1.0 <= self.value <= 5.0):
            raise ValueError(f"quality score {self.value} outside [1, 5]")
