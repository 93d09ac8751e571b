"""Subjective score normalization.

Raw slider scores in [0, 100] are z-scored per annotator (sample std,
M-1 denominator), rescaled to mean 50 / std 16.6, and averaged per video
over the annotators who rated it.  Per-annotator stats are computed over
each annotator's own rated set, so partial coverage degrades gracefully.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal

from .manifest import MosRecord, RatingRecord

log = logging.getLogger(__name__)

RESCALE_MEAN = 50.0
RESCALE_STD = 16.6

DegeneratePolicy = Literal["exclude", "abort"]


class DegenerateAnnotatorError(ValueError):
    """Annotator whose scores cannot be z-normalized (constant or < 2 ratings)."""

    def __init__(self, annotator_id: str, reason: str):
        self.annotator_id = annotator_id
        self.reason = reason
        super().__init__(f"annotator {annotator_id!r}: {reason}")


class NoValidRatingsError(ValueError):
    """A video lost all its ratings after degenerate-annotator exclusion."""

    def __init__(self, video_ids: list[str]):
        self.video_ids = video_ids
        super().__init__(f"videos with no valid ratings: {video_ids}")


@dataclass(frozen=True)
class AnnotatorStats:
    annotator_id: str
    mu: float
    sigma: float
    m_rated: int


def group_by_annotator(ratings: Iterable[RatingRecord]) -> dict[str, list[RatingRecord]]:
    groups: dict[str, list[RatingRecord]] = {}
    for r in ratings:
        groups.setdefault(r.annotator_id, []).append(r)
    return groups


def annotator_stats(ratings: Iterable[RatingRecord]) -> list[AnnotatorStats]:
    """Per-annotator mean and sample std over that annotator's rated set.

    Raises DegenerateAnnotatorError for annotators with fewer than 2
    ratings or zero variance; callers pick exclude-vs-abort policy.
    """
    out = []
    for annotator_id, recs in group_by_annotator(ratings).items():
        scores = [r.raw_score for r in recs]
        m = len(scores)
        if m < 2:
            raise DegenerateAnnotatorError(annotator_id, f"needs >= 2 ratings, has {m}")
        mu = sum(scores) / m
        var = sum((s - mu) ** 2 for s in scores) / (m - 1)
        sigma = math.sqrt(var)
        if sigma == 0.0:
            raise DegenerateAnnotatorError(annotator_id, "constant scores (zero variance)")
        out.append(AnnotatorStats(annotator_id=annotator_id, mu=mu, sigma=sigma, m_rated=m))
    return out


def rescale(z: float) -> float:
    """Affine map of a z-score onto the mean-50 / std-16.6 scale."""
    return RESCALE_MEAN + RESCALE_STD * z


def screen_annotators(groups: dict[str, list[RatingRecord]]) -> dict[str, list[RatingRecord]]:
    """Outlier-annotator screening hook; pass-through by default."""
    return groups


def compute_mosz(
    ratings: Iterable[RatingRecord],
    policy: DegeneratePolicy = "exclude",
) -> list[MosRecord]:
    """Per-video average of rescaled per-annotator z-scores.

    ``policy`` controls degenerate annotators (constant scores or a single
    rating): "exclude" drops them with a warning, "abort" raises.  A video
    left with no usable ratings raises NoValidRatingsError.
    """
    ratings = list(ratings)
    groups = screen_annotators(group_by_annotator(ratings))

    stats: dict[str, AnnotatorStats] = {}
    for annotator_id, recs in groups.items():
        try:
            (st,) = annotator_stats(recs)
        except DegenerateAnnotatorError as e:
            if policy == "abort":
                raise
            log.warning("excluding degenerate annotator %r: %s", annotator_id, e.reason)
            continue
        stats[annotator_id] = st

    per_video: dict[str, list[float]] = {}
    rated_videos: list[str] = []
    seen: set[str] = set()
    for r in ratings:
        if r.video_id not in seen:
            seen.add(r.video_id)
            rated_videos.append(r.video_id)
        st = stats.get(r.annotator_id)
        if st is None:
            continue
        z = (r.raw_score - st.mu) / st.sigma
        per_video.setdefault(r.video_id, []).append(rescale(z))

    orphaned = [v for v in rated_videos if v not in per_video]
    if orphaned:
        raise NoValidRatingsError(orphaned)

    return [
        MosRecord(video_id=v, mos_z=sum(scores) / len(scores), n_ratings=len(scores))
        for v, scores in ((v, per_video[v]) for v in rated_videos)
    ]
