"""Optimisation loop.

Adam over the trainable parameter groups with a cosine learning-rate
schedule decaying from lr0 to 0 across the planned step count.  Batches
are drawn by a per-epoch seeded permutation so a (seed, data) pair
always yields the same sequence of updates.  Every step appends one
JSON line to the log; every epoch appends a validation line.  A
non-finite loss aborts immediately, naming the step and batch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import torch

from .losses import total_loss
from .manifest import DatasetManifest, resolve_frames_path
from .metrics import UndefinedCorrelationError, plcc, srocc
from .model import Network, sample_frames

# epoch seeds: spread around the base seed without colliding across epochs
_EPOCH_SEED_STRIDE = 100003


class TrainDivergedError(Exception):
    def __init__(self, step: int, video_ids: Sequence[str]):
        self.step = step
        self.video_ids = tuple(video_ids)
        super().__init__(
            f"non-finite loss at step {step} on batch {list(self.video_ids)}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 30
    batch_size: int = 4
    loss_lambda: float = 0.3
    plcc_eps: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (correlation loss)")
        if self.loss_lambda < 0:
            raise ValueError("loss_lambda must be >= 0")
        if self.plcc_eps <= 0:
            raise ValueError("plcc_eps must be positive")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "loss_lambda": self.loss_lambda,
            "plcc_eps": self.plcc_eps,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        cfg = cls(**obj)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class Sample:
    """One preloaded training item."""

    video_id: str
    text_ids: torch.Tensor
    frames: torch.Tensor
    target: float


@dataclass(frozen=True)
class TrainResult:
    steps: int
    epochs: int
    final_loss: float | None
    val_history: tuple[dict, ...] = field(default_factory=tuple)


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr0 at step 0 decaying to 0 at step == total_steps."""
    if total_steps <= 0:
        return lr0
    step = min(max(step, 0), total_steps)
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def build_samples(network: Network, manifest: DatasetManifest,
                  video_ids: Sequence[str],
                  manifest_path: str | Path | None = None) -> list[Sample]:
    """Decode frames and targets for the given videos into memory."""
    cfg = network.config
    samples = []
    for vid in video_ids:
        if vid not in manifest.videos:
            raise KeyError(f"unknown video id {vid!r}")
        video = manifest.videos[vid]
        if vid not in manifest.mos:
            raise ValueError(f"video {vid!r} has no subjective score")
        prompt = manifest.prompts[video.prompt_id]
        frames = sample_frames(
            resolve_frames_path(video, manifest_path),
            video.frame_count, cfg.n_frames, cfg.frame_size)
        samples.append(Sample(
            video_id=vid,
            text_ids=network.encode_text(prompt.text),
            frames=frames,
            target=manifest.mos[vid].mos_z,
        ))
    return samples


def _epoch_batches(n: int, batch_size: int, epoch: int, seed: int) -> list[list[int]]:
    gen = torch.Generator()
    gen.manual_seed(seed * _EPOCH_SEED_STRIDE + epoch)
    perm = torch.randperm(n, generator=gen).tolist()
    chunks = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    return [c for c in chunks if len(c) >= 2]


def _batches_per_epoch(n: int, batch_size: int) -> int:
    full, rest = divmod(n, batch_size)
    return full + (1 if rest >= 2 else 0)


def _frozen_fingerprint(network: Network) -> dict[str, bytes]:
    out = {}
    for group, params in network.parameter_groups().items():
        if group in ("frame_encoder", "decoder"):
            for name, p in params:
                out[f"{group}.{name}"] = p.detach().numpy().tobytes()
    return out


def _validate(network: Network, val_samples: Sequence[Sample]) -> tuple[float | None, float | None]:
    with torch.no_grad():
        preds = [float(network.score(s.text_ids, s.frames)) for s in val_samples]
    targets = [s.target for s in val_samples]
    try:
        s = srocc(preds, targets)
    except UndefinedCorrelationError:
        s = None
    try:
        p = plcc(preds, targets)
    except UndefinedCorrelationError:
        p = None
    return s, p


def _log_line(fh: IO[str] | None, obj: dict) -> None:
    if fh is not None:
        fh.write(json.dumps(obj, sort_keys=True) + "\n")
        fh.flush()


def train(network: Network, samples: Sequence[Sample], config: TrainConfig, *,
          val_samples: Sequence[Sample] = (),
          log_path: str | Path | None = None) -> TrainResult:
    config.validate()
    if len(samples) < 2:
        raise ValueError("need at least 2 training samples")
    frozen_before = _frozen_fingerprint(network)
    optimizer = torch.optim.Adam(
        network.trainable_parameters(), lr=config.learning_rate)
    total_steps = config.epochs * _batches_per_epoch(len(samples), config.batch_size)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    step = 0
    final_loss = None
    val_history: list[dict] = []
    try:
        for epoch in range(config.epochs):
            for batch in _epoch_batches(
                    len(samples), config.batch_size, epoch, config.seed):
                lr = cosine_lr(step, total_steps, config.learning_rate)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                items = [samples[i] for i in batch]
                preds = torch.stack(
                    [network.score(s.text_ids, s.frames) for s in items])
                targets = torch.tensor(
                    [s.target for s in items], dtype=preds.dtype)
                loss, report = total_loss(
                    preds, targets, lambda_weight=config.loss_lambda,
                    eps=config.plcc_eps, step=step)
                if not bool(torch.isfinite(loss)):
                    raise TrainDivergedError(step, [s.video_id for s in items])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                final_loss = report.total
                _log_line(log_fh, {"lr": lr, **report.as_dict()})
                step += 1
            if val_samples:
                val_srocc, val_plcc = _validate(network, val_samples)
                entry = {"epoch": epoch, "val_srocc": val_srocc,
                         "val_plcc": val_plcc}
                val_history.append(entry)
                _log_line(log_fh, entry)
    finally:
        if log_fh is not None:
            log_fh.close()
    frozen_after = _frozen_fingerprint(network)
    if frozen_before != frozen_after:
        raise RuntimeError("frozen parameter groups changed during training")
    return TrainResult(
        steps=step,
        epochs=config.epochs,
        final_loss=final_loss,
        val_history=tuple(val_history),
    )
