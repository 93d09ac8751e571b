"""End-to-end acceptance checks, one test per shipped guarantee.

Every test is self-timed against the budget it must hold on a plain CPU
runner; tolerances are asserted against the independent oracles in
tests/oracles.py, never against the implementation under test.
"""

from __future__ import annotations

import time

import numpy as np
import torch

from t2vqa.evaluation import MosOracleScorer, evaluate, make_splits
from t2vqa.logistic import logistic, logistic_fit
from t2vqa.losses import plcc_loss, rank_loss
from t2vqa.manifest import RatingRecord, save_split_plan
from t2vqa.metrics import krcc, plcc, rmse, srocc
from t2vqa.model import ModelConfig, Network, level_expectation
from t2vqa.mos import annotator_stats, compute_mosz, rescale
from t2vqa.prompts import cluster_prompts, embed_prompts, sample_per_group
from t2vqa.training import Sample, TrainConfig, build_samples, train

from .oracles import (
    brute_mean,
    brute_pearson,
    brute_rmse,
    brute_sample_std,
    brute_spearman,
    brute_taub,
    central_diff,
)

STAMP = "2026-01-05T10:00:00Z"


def test_rescaled_ratings_anchor_stats_and_survive_affine_warps():
    t0 = time.monotonic()
    rng = np.random.default_rng(20401)
    for _ in range(200):
        raw = rng.uniform(0.0, 100.0, size=(5, 20))
        ratings = [
            RatingRecord(f"a{a}", f"v{v:02d}", float(raw[a, v]), STAMP)
            for a in range(5)
            for v in range(20)
        ]
        for st in annotator_stats(ratings):
            a = int(st.annotator_id[1:])
            scaled = [rescale((x - st.mu) / st.sigma) for x in raw[a]]
            assert abs(brute_mean(scaled) - 50.0) <= 1e-9
            assert abs(brute_sample_std(scaled) - 16.6) <= 1e-9
        base = {r.video_id: r.mos_z for r in compute_mosz(ratings)}
        # per-annotator positive affine warp of the raw scale
        gain = rng.uniform(0.2, 0.8, size=5)
        offset = rng.uniform(0.0, 15.0, size=5)
        warped = [
            RatingRecord(
                r.annotator_id,
                r.video_id,
                float(gain[int(r.annotator_id[1:])] * r.raw_score
                      + offset[int(r.annotator_id[1:])]),
                STAMP,
            )
            for r in ratings
        ]
        for rec in compute_mosz(warped):
            assert abs(rec.mos_z - base[rec.video_id]) <= 1e-9
    assert time.monotonic() - t0 < 5.0


def test_level_expectation_anchor_bounds_shift_and_monotonicity():
    t0 = time.monotonic()
    assert float(level_expectation(torch.zeros(5, dtype=torch.float64))) == 3.0
    assert float(level_expectation(
        torch.full((5,), 7.25, dtype=torch.float64))) == 3.0
    gen = torch.Generator().manual_seed(402)
    for trial in range(10_000):
        lam = (torch.rand(5, generator=gen, dtype=torch.float64) - 0.5) * 40.0
        value = float(level_expectation(lam))
        assert 1.0 <= value <= 5.0
        if trial % 10 == 0:
            shift = float(torch.rand((), generator=gen,
                                     dtype=torch.float64)) * 30.0 - 15.0
            assert abs(float(level_expectation(lam + shift)) - value) <= 1e-12
    for _ in range(50):
        lam = (torch.rand(5, generator=gen, dtype=torch.float64) - 0.5) * 8.0
        prev = float(level_expectation(lam))
        for bump in (0.05, 0.25, 1.0, 4.0):
            lam[4] += bump
            cur = float(level_expectation(lam))
            assert cur > prev
            prev = cur
    assert time.monotonic() - t0 < 5.0


def test_correlation_metrics_match_bruteforce_oracles():
    t0 = time.monotonic()
    rng = np.random.default_rng(31007)
    for trial in range(200):
        n = int(rng.integers(5, 51))
        x = rng.normal(0.0, 2.0, size=n)
        y = 0.6 * x + rng.normal(0.0, 1.5, size=n)
        if trial % 2 == 0:
            # coarse rounding injects heavy ties on both sides
            x = np.round(x)
            y = np.round(y, 1)
            if np.ptp(x) == 0:
                x[0] += 1.0
            if np.ptp(y) == 0:
                y[0] += 1.0
        assert abs(srocc(x, y) - brute_spearman(x, y)) <= 1e-9
        assert abs(plcc(x, y) - brute_pearson(x, y)) <= 1e-9
        assert abs(krcc(x, y) - brute_taub(x, y)) <= 1e-9
        assert abs(rmse(x, y) - brute_rmse(x, y)) <= 1e-9
    assert time.monotonic() - t0 < 30.0


def test_loss_and_score_gradients_match_central_differences(tiny_config):
    t0 = time.monotonic()
    rng = np.random.default_rng(88)

    target = np.sort(rng.normal(0.0, 1.0, size=8))
    pred0 = rng.normal(0.0, 1.0, size=8)
    targ_t = torch.tensor(target, dtype=torch.float64)
    pred_t = torch.tensor(pred0, dtype=torch.float64, requires_grad=True)
    loss, degenerate = plcc_loss(pred_t, targ_t)
    assert not degenerate
    (g_plcc,) = torch.autograd.grad(loss, pred_t)
    for i in range(8):
        def f_plcc(v, i=i):
            p = pred0.copy()
            p[i] = v
            out, _ = plcc_loss(torch.tensor(p, dtype=torch.float64), targ_t)
            return float(out)
        fd = central_diff(f_plcc, pred0[i])
        an = float(g_plcc[i])
        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-6)

    # pairwise prediction gaps of 0.3 keep the hinge kink far from the
    # finite-difference stencil
    pred0 = rng.permutation(8).astype(np.float64) * 0.3
    pred_t = torch.tensor(pred0, dtype=torch.float64, requires_grad=True)
    (g_rank,) = torch.autograd.grad(rank_loss(pred_t, targ_t), pred_t)
    for i in range(8):
        def f_rank(v, i=i):
            p = pred0.copy()
            p[i] = v
            return float(rank_loss(torch.tensor(p, dtype=torch.float64), targ_t))
        fd = central_diff(f_rank, pred0[i])
        an = float(g_rank[i])
        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-6)

    net = Network(tiny_config)
    gen = torch.Generator().manual_seed(7)
    frames = torch.rand((tiny_config.n_frames, 3, tiny_config.frame_size,
                         tiny_config.frame_size),
                        dtype=torch.float64, generator=gen)
    text_ids = net.encode_text("a red ball rolls left")
    score = net.score(text_ids, frames)
    params = list(net.trainable_parameters())
    grads = torch.autograd.grad(score, params)
    picker = torch.Generator().manual_seed(11)
    h = 1e-5
    for _ in range(30):
        pi = int(torch.randint(len(params), (1,), generator=picker))
        ci = int(torch.randint(params[pi].numel(), (1,), generator=picker))
        flat = params[pi].view(-1)
        with torch.no_grad():
            orig = flat[ci].item()
            flat[ci] = orig + h
            up = float(net.score(text_ids, frames))
            flat[ci] = orig - h
            down = float(net.score(text_ids, frames))
            flat[ci] = orig
        fd = (up - down) / (2.0 * h)
        an = float(grads[pi].view(-1)[ci])
        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-6)
    assert time.monotonic() - t0 < 120.0


def test_frozen_towers_unchanged_after_training(tiny_config):
    t0 = time.monotonic()
    net = Network(tiny_config)
    gen = torch.Generator().manual_seed(5150)
    samples = []
    for i in range(8):
        frames = torch.rand((tiny_config.n_frames, 3, tiny_config.frame_size,
                             tiny_config.frame_size),
                            dtype=torch.float64, generator=gen)
        target = float(i) + float(torch.rand((), generator=gen))
        samples.append(Sample(f"v{i:03d}", net.encode_text(f"sample {i}"),
                              frames, target))

    def group_bytes():
        return {
            group: b"".join(p.detach().cpu().numpy().tobytes()
                            for _, p in named)
            for group, named in net.parameter_groups().items()
        }

    before = group_bytes()
    result = train(net, samples,
                   TrainConfig(learning_rate=1e-3, epochs=5, batch_size=4,
                               seed=3))
    assert result.steps == 10
    after = group_bytes()
    for group in ("frame_encoder", "decoder"):
        assert after[group] == before[group]
    for group in ("text_encoder", "fidelity_encoder", "fusion",
                  "decoder_proj"):
        assert after[group] != before[group]
    assert time.monotonic() - t0 < 60.0


def test_toy_model_overfits_brightness_ladder(manifest_builder, tmp_path):
    t0 = time.monotonic()
    manifest = manifest_builder(tmp_path, 16, n_frames=8, size=32)
    cfg = ModelConfig(
        n_frames=8, frame_size=32, patch_size=16,
        align_dim=16, fidelity_dim=16, fidelity_patch=(2, 8, 8),
        window_size=(1, 2, 2), n_fidelity_blocks=2,
        fusion_dim=16, n_fusion_blocks=2,
        decoder_dim=16, n_decoder_blocks=1,
        n_frame_blocks=1, n_text_blocks=1,
        n_heads=2, ffn_ratio=2, vocab_size=64, max_text_len=16, seed=0)
    net = Network(cfg)
    samples = build_samples(net, manifest, manifest.video_ids())
    result = train(net, samples,
                   TrainConfig(learning_rate=3e-3, epochs=75, batch_size=4,
                               seed=0))
    assert result.steps == 300
    with torch.no_grad():
        preds = [float(net.score(s.text_ids, s.frames)) for s in samples]
    assert srocc(preds, [s.target for s in samples]) >= 0.95
    assert time.monotonic() - t0 < 300.0


def test_logistic_refit_recovers_noisy_known_curve():
    t0 = time.monotonic()
    rng = np.random.default_rng(77)
    beta = np.array([4.6, 1.1, 3.0, 0.7])
    x = np.sort(rng.uniform(1.0, 5.0, size=50))
    clean = logistic(beta, x)
    noisy = clean + rng.normal(0.0, 0.01, size=50)
    _, mapped = logistic_fit(x, noisy)
    assert brute_rmse(mapped, noisy) <= 0.05
    assert brute_rmse(mapped, clean) <= 0.05
    assert np.all(np.diff(mapped) > 0)  # x is sorted, order must carry over
    assert time.monotonic() - t0 < 10.0


def test_split_protocol_oracle_scores_and_determinism(manifest_builder,
                                                      tmp_path):
    t0 = time.monotonic()
    manifest = manifest_builder(tmp_path, 50)
    plan = make_splits(manifest, n_folds=10, test_fraction=0.2, seed=11)
    assert len(plan.folds) == 10
    all_ids = set(manifest.video_ids())
    for fold in plan.folds:
        test_ids = set(fold.test_video_ids)
        train_ids = set(fold.train_video_ids)
        assert abs(len(test_ids) - 10) <= 1
        assert not (test_ids & train_ids)
        assert test_ids | train_ids == all_ids

    report = evaluate(MosOracleScorer(manifest), manifest, plan)
    for fold in report.folds:
        assert abs(fold.srocc - 1.0) <= 1e-6
        assert abs(fold.plcc - 1.0) <= 1e-6

    blobs = set()
    for run in range(10):
        path = tmp_path / f"plan{run}.json"
        save_split_plan(
            make_splits(manifest, n_folds=10, test_fraction=0.2, seed=11),
            path)
        blobs.add(path.read_bytes())
    assert len(blobs) == 1
    assert time.monotonic() - t0 < 30.0


def _bundled_prompts(n_bundles, per_bundle, seed):
    """Tight planted bundles: family words dominate, one filler word keeps
    texts distinct, so intra-bundle cosine sits near 0.94 and cross-bundle
    near zero."""
    rng = np.random.default_rng(seed)
    prompts, truth = [], {}
    for b in rng.permutation(n_bundles):
        family = [f"theme{b}word{w}" for w in range(4)]
        for i in range(per_bundle):
            pid = f"b{b:03d}i{i:03d}"
            prompts.append((pid, " ".join(family * 2) + f" filler{b}x{i}"))
            truth[pid] = int(b)
    return prompts, truth


def _purity(assign, truth):
    clusters = {}
    for pid, g in assign.groups.items():
        clusters.setdefault(g, []).append(truth[pid])
    hits = 0
    for members in clusters.values():
        counts = {}
        for b in members:
            counts[b] = counts.get(b, 0) + 1
        hits += max(counts.values())
    return hits / len(assign.groups)


def test_prompt_clustering_recovers_planted_bundles():
    t0 = time.monotonic()
    prompts, truth = _bundled_prompts(100, 20, seed=1)
    assert len(prompts) == 2000

    def select():
        assign = cluster_prompts(embed_prompts(prompts), k=100, seed=0)
        return assign, sample_per_group(assign, 10, seed=0)

    assign, selected = select()
    assert _purity(assign, truth) >= 0.9
    assert len(selected) == 1000
    assert len(set(selected)) == 1000
    _, again = select()
    assert again == selected
    assert time.monotonic() - t0 < 60.0
