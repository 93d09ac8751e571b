"""Descriptive reporting over a scored dataset.

Tables of MOS mean/std per generator and per prompt category, plus
scatter emission of (prediction, MOS) pairs with a least-squares
quartic trend used by the report plots.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .evaluation import MissingMosError
from .manifest import DatasetManifest

UNCATEGORIZED = "uncategorized"

QUARTIC_DEGREE = 4


@dataclass(frozen=True)
class GeneratorRow:
    generator: str
    n_videos: int
    mos_mean: float
    mos_std: float
    rank: int


@dataclass(frozen=True)
class CategoryRow:
    category: str
    n_videos: int
    mos_mean: float
    mos_std: float


@dataclass(frozen=True)
class AnalysisReport:
    generators: tuple[GeneratorRow, ...]
    categories: tuple[CategoryRow, ...]
    best_generator: str

    def as_dict(self) -> dict:
        return {
            "best_generator": self.best_generator,
            "generators": [
                {"generator": g.generator, "n_videos": g.n_videos,
                 "mos_mean": g.mos_mean, "mos_std": g.mos_std, "rank": g.rank}
                for g in self.generators
            ],
            "categories": [
                {"category": c.category, "n_videos": c.n_videos,
                 "mos_mean": c.mos_mean, "mos_std": c.mos_std}
                for c in self.categories
            ],
        }


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def analyze(manifest: DatasetManifest) -> AnalysisReport:
    missing = sorted(v for v in manifest.videos if v not in manifest.mos)
    if missing:
        raise MissingMosError(missing)
    if not manifest.videos:
        raise ValueError("manifest holds no videos to analyze")
    by_generator: dict[str, list[float]] = {}
    by_category: dict[str, list[float]] = {}
    for vid, video in manifest.videos.items():
        mos = manifest.mos[vid].mos_z
        by_generator.setdefault(video.generator, []).append(mos)
        category = manifest.prompts[video.prompt_id].category or UNCATEGORIZED
        by_category.setdefault(category, []).append(mos)

    ordered = sorted(
        by_generator.items(), key=lambda kv: (-np.mean(kv[1]), kv[0]))
    generators = tuple(
        GeneratorRow(generator=name, n_videos=len(vals),
                     mos_mean=_mean_std(vals)[0], mos_std=_mean_std(vals)[1],
                     rank=i + 1)
        for i, (name, vals) in enumerate(ordered)
    )
    categories = tuple(
        CategoryRow(category=name, n_videos=len(vals),
                    mos_mean=_mean_std(vals)[0], mos_std=_mean_std(vals)[1])
        for name, vals in sorted(by_category.items())
    )
    return AnalysisReport(
        generators=generators,
        categories=categories,
        best_generator=generators[0].generator,
    )


def generator_table_csv(report: AnalysisReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "generator", "n_videos", "mos_mean", "mos_std"])
    for row in report.generators:
        writer.writerow([row.rank, row.generator, row.n_videos,
                         f"{row.mos_mean:.6f}", f"{row.mos_std:.6f}"])
    return buf.getvalue()


def category_table_csv(report: AnalysisReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "n_videos", "mos_mean", "mos_std"])
    for row in report.categories:
        writer.writerow([row.category, row.n_videos,
                         f"{row.mos_mean:.6f}", f"{row.mos_std:.6f}"])
    return buf.getvalue()


def quartic_fit(pred: Sequence[float], mos: Sequence[float]) -> np.ndarray:
    """Least-squares degree-4 coefficients, highest order first."""
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if pred.ndim != 1 or pred.shape != mos.shape:
        raise ValueError("pred and mos must be 1-D arrays of equal length")
    if len(pred) < QUARTIC_DEGREE + 1:
        raise ValueError("quartic fit needs at least 5 points")
    return np.polyfit(pred, mos, QUARTIC_DEGREE)


def scatter_rows(predictions: Mapping[str, float],
                 manifest: DatasetManifest) -> list[tuple[str, float, float]]:
    missing = sorted(v for v in predictions if v not in manifest.mos)
    if missing:
        raise MissingMosError(missing)
    return [(vid, float(predictions[vid]), manifest.mos[vid].mos_z)
            for vid in sorted(predictions)]


def save_scatter_csv(rows: Sequence[tuple[str, float, float]],
                     path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "pred", "mos"])
        for vid, pred, mos in rows:
            writer.writerow([vid, repr(pred), repr(mos)])


def save_quartic_json(coeffs: np.ndarray, path: str | Path) -> None:
    payload = {"degree": QUARTIC_DEGREE,
               "coefficients": [float(c) for c in coeffs]}
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def render_scatter_png(rows: Sequence[tuple[str, float, float]],
                       coeffs: np.ndarray, path: str | Path) -> None:
    """Optional plot; needs matplotlib installed (the 'plot' extra)."""
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError(
            "plot rendering needs matplotlib (install the 'plot' extra)") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    preds = [r[1] for r in rows]
    moses = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(preds, moses, s=12, alpha=0.6, label="videos")
    grid = np.linspace(min(preds), max(preds), 200)
    ax.plot(grid, np.polyval(coeffs, grid), lw=1.5, label="quartic trend")
    ax.set_xlabel("predicted score")
    ax.set_ylabel("MOS")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
