"""Embedded invariant suite for the selftest subcommand.

Each check re-derives its expectation from scratch (tiny brute-force
oracles live here, on purpose independent of the library code) and
prints one pass/fail line.  Fast by design: a few seconds end to end.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from .losses import plcc_loss, rank_loss, total_loss
from .logistic import LogisticParams, logistic, logistic_fit
from .manifest import DatasetManifest, MosRecord, PromptRecord, RatingRecord, VideoRecord
from .metrics import krcc, plcc, srocc
from .model import ModelConfig, Network, frame_indices, level_expectation, save_checkpoint
from .mos import compute_mosz, rescale
from .evaluation import make_splits


def _brute_pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx, dy = x - x.mean(), y - y.mean()
    return float((dx * dy).sum() / math.sqrt((dx ** 2).sum() * (dy ** 2).sum()))


def _brute_ranks(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    ranks = np.empty(len(x))
    for i, v in enumerate(x):
        less = np.sum(x < v)
        equal = np.sum(x == v)
        ranks[i] = less + (equal + 1) / 2.0
    return ranks


def _brute_taub(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    concordant = discordant = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            a, b = x[i] - x[j], y[i] - y[j]
            if a == 0 and b == 0:
                tx += 1
                ty += 1
            elif a == 0:
                tx += 1
            elif b == 0:
                ty += 1
            elif a * b > 0:
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) / 2
    return (concordant - discordant) / math.sqrt((n0 - tx) * (n0 - ty))


def _check_mosz(rng: np.random.Generator) -> None:
    for _ in range(20):
        ratings = []
        for a in range(5):
            scores = rng.uniform(5, 95, size=12)
            for v, s in enumerate(scores):
                ratings.append(RatingRecord(
                    annotator_id=f"a{a}", video_id=f"v{v:02d}",
                    raw_score=float(s), timestamp=""))
        records = compute_mosz(ratings)
        base = {r.video_id: r.mos_z for r in records}
        # per-annotator positive affine transform must not move MOSz
        warped = [RatingRecord(
            annotator_id=r.annotator_id, video_id=r.video_id,
            raw_score=min(100.0, max(0.0, 0.5 * r.raw_score + 7.0)),
            timestamp=r.timestamp) for r in ratings]
        again = {r.video_id: r.mos_z for r in compute_mosz(warped)}
        drift = max(abs(base[v] - again[v]) for v in base)
        assert drift <= 1e-9, f"affine drift {drift}"
    assert rescale(0.0) == 50.0 and abs(rescale(1.0) - 66.6) < 1e-12


def _check_level_expectation(rng: np.random.Generator) -> None:
    uniform = torch.zeros(5, dtype=torch.float64)
    assert float(level_expectation(uniform)) == 3.0
    for _ in range(200):
        lam = torch.tensor(rng.normal(0, 5, size=5))
        s = float(level_expectation(lam))
        assert 1.0 <= s <= 5.0
        shifted = float(level_expectation(lam + 11.3))
        assert abs(s - shifted) <= 1e-12, "shift invariance"
    lam = torch.tensor(rng.normal(0, 1, size=5))
    lo = float(level_expectation(lam))
    lam2 = lam.clone()
    lam2[4] += 0.5
    assert float(level_expectation(lam2)) > lo, "monotone in top logit"


def _check_metrics(rng: np.random.Generator) -> None:
    for _ in range(30):
        n = int(rng.integers(5, 30))
        x = np.round(rng.normal(0, 1, size=n), 1)  # rounding injects ties
        y = np.round(x + rng.normal(0, 0.8, size=n), 1)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        assert abs(plcc(x, y) - _brute_pearson(x, y)) <= 1e-9
        assert abs(srocc(x, y) - _brute_pearson(_brute_ranks(x), _brute_ranks(y))) <= 1e-9
        assert abs(krcc(x, y) - _brute_taub(x, y)) <= 1e-9


def _check_logistic(rng: np.random.Generator) -> None:
    true = LogisticParams(82.0, 18.0, 0.3, 1.2)
    x = np.linspace(-4, 4, 50)
    y = logistic(true.as_array(), x)
    params, mapped = logistic_fit(x, y)
    assert float(np.sqrt(np.mean((mapped - y) ** 2))) <= 1e-6, "exact recovery"
    _, mapped_affine = logistic_fit(x, 3 * x + 7)
    assert _brute_pearson(mapped_affine, 3 * x + 7) >= 0.999, "affine segment"


def _check_losses(rng: np.random.Generator) -> None:
    pred = torch.tensor(rng.normal(0, 1, size=8))
    target = torch.tensor(rng.normal(0, 1, size=8))
    total, report = total_loss(pred, target)
    recomposed = report.plcc_part + 0.3 * report.rank_part
    assert abs(report.total - recomposed) <= 1e-9
    p, degenerate = plcc_loss(pred, torch.full((8,), 2.5, dtype=torch.float64))
    assert degenerate and float(p) == 0.5
    ordered = torch.arange(8, dtype=torch.float64)
    assert float(rank_loss(ordered, ordered)) == 0.0


def _toy_manifest(n: int) -> DatasetManifest:
    m = DatasetManifest()
    for i in range(n):
        pid, vid = f"p{i:03d}", f"v{i:03d}"
        m.prompts[pid] = PromptRecord(prompt_id=pid, text=f"sample {i}")
        m.videos[vid] = VideoRecord(
            video_id=vid, prompt_id=pid, generator="g",
            frames_path=f"frames/{vid}", frame_count=8, width=16, height=16,
            fps=8.0)
        m.mos[vid] = MosRecord(video_id=vid, mos_z=float(i), n_ratings=3)
    return m


def _check_splits(rng: np.random.Generator) -> None:
    m = _toy_manifest(50)
    plan = make_splits(m, n_folds=10, test_fraction=0.2, seed=3)
    assert len(plan.folds) == 10
    all_ids = set(m.videos)
    for fold in plan.folds:
        train, test = set(fold.train_video_ids), set(fold.test_video_ids)
        assert len(test) == 10 and not train & test and train | test == all_ids
    again = make_splits(m, n_folds=10, test_fraction=0.2, seed=3)
    assert plan == again, "seed determinism"


def _check_frame_indices(rng: np.random.Generator) -> None:
    assert frame_indices(16, 8) == [0, 2, 4, 6, 9, 11, 13, 15]
    assert frame_indices(1, 4) == [0, 0, 0, 0]
    for _ in range(50):
        count = int(rng.integers(1, 100))
        picks = frame_indices(count, 8)
        assert all(0 <= i < count for i in picks)
        assert picks == sorted(picks)


def _check_checkpoint_determinism(rng: np.random.Generator) -> None:
    import io
    import tempfile
    from pathlib import Path

    cfg = ModelConfig(n_frames=4, frame_size=16, patch_size=8,
                      fidelity_patch=(2, 4, 4), window_size=(1, 2, 2),
                      n_fidelity_blocks=1, n_fusion_blocks=1,
                      n_decoder_blocks=1, max_text_len=16)
    net = Network(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a.zip", Path(tmp) / "b.zip"
        save_checkpoint(net, a)
        save_checkpoint(net, b)
        assert a.read_bytes() == b.read_bytes(), "checkpoint bytes differ"


CHECKS = (
    ("mosz normalization and affine invariance", _check_mosz),
    ("level-token expectation", _check_level_expectation),
    ("correlation metrics vs brute oracles", _check_metrics),
    ("logistic fit recovery", _check_logistic),
    ("loss composition", _check_losses),
    ("split plan invariants", _check_splits),
    ("frame sampling indices", _check_frame_indices),
    ("checkpoint byte determinism", _check_checkpoint_determinism),
)


def run_selftest(seed: int = 0) -> int:
    """Run every embedded check; returns the number of failures."""
    failures = 0
    for name, check in CHECKS:
        rng = np.random.default_rng(seed)
        try:
            check(rng)
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            print(f"[FAIL] {name}: {exc}")
        else:
            print(f"[ok] {name}")
    return failures
