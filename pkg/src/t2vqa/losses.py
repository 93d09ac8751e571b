"""Training objective.

Total loss is a linear-correlation term plus a weighted pairwise rank
hinge: L = L_plcc + lambda * L_rank.  The correlation term maps Pearson
r over the batch to (1 - r) / 2 so it lives in [0, 1]; a batch whose
predictions or targets are (numerically) constant has no defined r and
contributes the neutral value 0.5 with a flag instead of NaN.  The rank
term averages max(0, pred_j - pred_i) over all ordered pairs whose
targets satisfy t_i > t_j, so its scale does not grow with batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

DEFAULT_LAMBDA = 0.3
DEFAULT_EPS = 1e-8

DEGENERATE_PLCC = 0.5  # (1 - r) / 2 at r = 0


@dataclass(frozen=True)
class LossReport:
    """Float snapshot of one loss evaluation for logging."""

    step: int
    total: float
    plcc_part: float
    rank_part: float
    degenerate: bool

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "total": self.total,
            "plcc_part": self.plcc_part,
            "rank_part": self.rank_part,
            "degenerate": self.degenerate,
        }


def _check_batch(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.ndim != 1 or target.ndim != 1:
        raise ValueError("pred and target must be 1-D")
    if pred.shape[0] != target.shape[0]:
        raise ValueError(
            f"length mismatch: {pred.shape[0]} vs {target.shape[0]}")
    if pred.shape[0] < 2:
        raise ValueError("need at least 2 samples per batch")


def plcc_loss(pred: torch.Tensor, target: torch.Tensor,
              eps: float = DEFAULT_EPS) -> tuple[torch.Tensor, bool]:
    """(1 - r) / 2 with an exact Pearson r; returns (loss, degenerate)."""
    _check_batch(pred, target)
    target = target.to(pred.dtype)
    dp = pred - pred.mean()
    dt = target - target.mean()
    n = pred.shape[0]
    # population std only gates degeneracy; r itself stays exact
    if torch.sqrt((dp ** 2).mean()) < eps or torch.sqrt((dt ** 2).mean()) < eps:
        return pred.new_tensor(DEGENERATE_PLCC), True
    r = (dp * dt).sum() / torch.sqrt((dp ** 2).sum() * (dt ** 2).sum())
    r = r.clamp(-1.0, 1.0)
    return (1.0 - r) / 2.0, False


def rank_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean hinge over ordered pairs where the target ranks i above j."""
    _check_batch(pred, target)
    target = target.to(pred.dtype)
    ordered = target[:, None] > target[None, :]
    if not bool(ordered.any()):
        return pred.new_zeros(())
    # violation of pair (i, j): pred_j exceeds pred_i
    margins = torch.relu(pred[None, :] - pred[:, None])
    return margins[ordered].mean()


def total_loss(pred: torch.Tensor, target: torch.Tensor, *,
               lambda_weight: float = DEFAULT_LAMBDA,
               eps: float = DEFAULT_EPS,
               step: int = 0) -> tuple[torch.Tensor, LossReport]:
    plcc_part, degenerate = plcc_loss(pred, target, eps=eps)
    rank_part = rank_loss(pred, target)
    total = plcc_part + lambda_weight * rank_part
    report = LossReport(
        step=step,
        total=float(total.detach()),
        plcc_part=float(plcc_part.detach()),
        rank_part=float(rank_part.detach()),
        degenerate=degenerate,
    )
    return total, report
