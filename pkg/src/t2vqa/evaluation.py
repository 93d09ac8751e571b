"""Ten-fold correlation protocol with pluggable scorers.

A Scorer turns (prompt text, video record) into a real-valued quality
prediction.  evaluate() scores each fold's test videos, computes SROCC
and KRCC on the raw predictions, fits the four-parameter logistic map,
computes PLCC and RMSE on the mapped predictions, and aggregates
mean and sample std across folds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .logistic import LogisticParams, logistic_fit
from .manifest import DatasetManifest, Fold, SplitPlan, VideoRecord, resolve_frames_path
from .metrics import UndefinedCorrelationError, krcc, plcc, rmse, srocc

METRIC_NAMES = ("srocc", "krcc", "plcc", "rmse")


class MissingMosError(Exception):
    def __init__(self, video_ids: Sequence[str]):
        self.video_ids = tuple(sorted(video_ids))
        shown = list(self.video_ids[:10])
        more = "" if len(self.video_ids) <= 10 else f" (+{len(self.video_ids) - 10} more)"
        super().__init__(f"videos missing MOS: {shown}{more}")


@runtime_checkable
class Scorer(Protocol):
    """Quality predictor; must be deterministic per (text, video)."""

    name: str

    def score(self, text: str, video: VideoRecord) -> float: ...


class MosOracleScorer:
    """Returns the subjective score itself, optionally transformed."""

    def __init__(self, manifest: DatasetManifest,
                 transform: Callable[[float], float] | None = None,
                 name: str = "mos-oracle"):
        self._mos = {vid: rec.mos_z for vid, rec in manifest.mos.items()}
        self._transform = transform
        self.name = name

    def score(self, text: str, video: VideoRecord) -> float:
        if video.video_id not in self._mos:
            raise MissingMosError([video.video_id])
        value = self._mos[video.video_id]
        return self._transform(value) if self._transform else value


class RandomScorer:
    """Seed-keyed hash of the video id; the null baseline."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.name = f"random-{seed}"

    def score(self, text: str, video: VideoRecord) -> float:
        digest = hashlib.blake2s(
            f"{self.seed}:{video.video_id}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") / 2.0 ** 64


class BrightnessScorer:
    """Mean pixel value of the sampled frames; a crude reference."""

    def __init__(self, manifest_path: str | Path | None = None,
                 n_frames: int = 8, frame_size: int = 32):
        self.manifest_path = manifest_path
        self.n_frames = n_frames
        self.frame_size = frame_size
        self.name = "brightness"
        self._cache: dict[str, float] = {}

    def score(self, text: str, video: VideoRecord) -> float:
        if video.video_id not in self._cache:
            from .model import sample_frames

            frames = sample_frames(
                resolve_frames_path(video, self.manifest_path),
                video.frame_count, self.n_frames, self.frame_size)
            self._cache[video.video_id] = float(frames.mean())
        return self._cache[video.video_id]


class CheckpointScorer:
    """Runs a trained network loaded from a checkpoint archive."""

    def __init__(self, checkpoint_path: str | Path,
                 manifest_path: str | Path | None = None, network=None):
        if network is None:
            from .model import load_checkpoint

            network = load_checkpoint(checkpoint_path)
        self.network = network
        self.manifest_path = manifest_path
        self.name = f"checkpoint:{Path(checkpoint_path).name}"
        self._cache: dict[str, float] = {}

    def score(self, text: str, video: VideoRecord) -> float:
        if video.video_id not in self._cache:
            from .model import sample_frames

            cfg = self.network.config
            frames = sample_frames(
                resolve_frames_path(video, self.manifest_path),
                video.frame_count, cfg.n_frames, cfg.frame_size)
            self._cache[video.video_id] = self.network.predict(text, frames).value
        return self._cache[video.video_id]


def make_splits(manifest: DatasetManifest, n_folds: int = 10,
                test_fraction: float = 0.2, seed: int = 0,
                split_by: str = "video") -> SplitPlan:
    """Independent random train/test partitions, deterministic per seed."""
    if n_folds < 1:
        raise ValueError("n_folds must be >= 1")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if split_by not in ("video", "prompt"):
        raise ValueError("split_by must be 'video' or 'prompt'")
    video_ids = manifest.video_ids()
    if len(video_ids) < 5:
        raise ValueError(
            f"need at least 5 videos to split, got {len(video_ids)}")
    rng = np.random.default_rng(seed)
    folds = []
    if split_by == "video":
        n = len(video_ids)
        n_test = min(max(round(test_fraction * n), 1), n - 1)
        for f in range(n_folds):
            perm = rng.permutation(n)
            test = sorted(video_ids[i] for i in perm[:n_test])
            train = sorted(video_ids[i] for i in perm[n_test:])
            folds.append(Fold(fold_index=f, train_video_ids=tuple(train),
                              test_video_ids=tuple(test)))
    else:
        by_prompt: dict[str, list[str]] = {}
        for vid in video_ids:
            by_prompt.setdefault(manifest.videos[vid].prompt_id, []).append(vid)
        prompt_ids = sorted(by_prompt)
        if len(prompt_ids) < 2:
            raise ValueError("prompt-level split needs at least 2 prompts")
        n = len(prompt_ids)
        n_test = min(max(round(test_fraction * n), 1), n - 1)
        for f in range(n_folds):
            perm = rng.permutation(n)
            test_prompts = {prompt_ids[i] for i in perm[:n_test]}
            test = sorted(
                v for p in test_prompts for v in by_prompt[p])
            train = sorted(
                v for p in by_prompt if p not in test_prompts
                for v in by_prompt[p])
            folds.append(Fold(fold_index=f, train_video_ids=tuple(train),
                              test_video_ids=tuple(test)))
    plan = SplitPlan(seed=seed, folds=tuple(folds))
    plan.validate()
    return plan


@dataclass(frozen=True)
class FoldResult:
    fold_index: int
    srocc: float
    krcc: float
    plcc: float
    rmse: float
    logistic: LogisticParams

    def as_dict(self) -> dict:
        return {
            "fold_index": self.fold_index,
            "srocc": self.srocc,
            "krcc": self.krcc,
            "plcc": self.plcc,
            "rmse": self.rmse,
            "logistic": {
                "beta1": self.logistic.beta1,
                "beta2": self.logistic.beta2,
                "beta3": self.logistic.beta3,
                "beta4": self.logistic.beta4,
                "converged": self.logistic.converged,
            },
        }


@dataclass(frozen=True)
class EvalReport:
    scorer_name: str
    folds: tuple[FoldResult, ...]
    aggregate: dict

    def as_dict(self) -> dict:
        return {
            "scorer": self.scorer_name,
            "n_folds": len(self.folds),
            "folds": [f.as_dict() for f in self.folds],
            "aggregate": self.aggregate,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _aggregate(folds: Sequence[FoldResult]) -> dict:
    out = {}
    for metric in METRIC_NAMES:
        values = np.array([getattr(f, metric) for f in folds], dtype=float)
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        out[metric] = {"mean": float(values.mean()), "std": std}
    return out


def evaluate(scorer: Scorer, manifest: DatasetManifest,
             splits: SplitPlan) -> EvalReport:
    missing = sorted({
        vid for fold in splits.folds for vid in fold.test_video_ids
        if vid not in manifest.mos})
    if missing:
        raise MissingMosError(missing)
    fold_results = []
    for fold in splits.folds:
        preds, targets = [], []
        for vid in fold.test_video_ids:
            video = manifest.videos[vid]
            text = manifest.prompts[video.prompt_id].text
            preds.append(float(scorer.score(text, video)))
            targets.append(manifest.mos[vid].mos_z)
        if len(preds) < 4:
            raise ValueError(
                f"fold {fold.fold_index}: {len(preds)} test videos is too few "
                f"for the logistic mapping (need >= 4)")
        params, mapped = logistic_fit(preds, targets)
        try:
            plcc_value = plcc(mapped, targets)
        except UndefinedCorrelationError:
            # an uninformative scorer fits best as a flat curve; fall back
            # to the raw predictions so the report stays defined
            plcc_value = plcc(preds, targets)
        fold_results.append(FoldResult(
            fold_index=fold.fold_index,
            srocc=srocc(preds, targets),
            krcc=krcc(preds, targets),
            plcc=plcc_value,
            rmse=rmse(mapped, targets),
            logistic=params,
        ))
    return EvalReport(
        scorer_name=scorer.name,
        folds=tuple(fold_results),
        aggregate=_aggregate(fold_results),
    )


def save_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(report.to_json() + "\n", encoding="utf-8")
