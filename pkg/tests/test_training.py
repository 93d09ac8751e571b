from __future__ import annotations

import json
import math

import pytest
import torch

from t2vqa.manifest import save_manifest
from t2vqa.model import FROZEN_GROUPS, Network, save_checkpoint
from t2vqa.training import (
    Sample,
    TrainConfig,
    TrainDivergedError,
    _batches_per_epoch,
    _epoch_batches,
    build_samples,
    cosine_lr,
    train,
)


def make_samples(network, n, config, spread=True):
    samples = []
    for i in range(n):
        g = torch.Generator().manual_seed(100 + i)
        frames = torch.rand((config.n_frames, 3, config.frame_size,
                             config.frame_size), generator=g,
                            dtype=torch.float64)
        samples.append(Sample(
            video_id=f"v{i:03d}",
            text_ids=network.encode_text(f"sample text {i}"),
            frames=frames,
            target=float(i) if spread else 1.0,
        ))
    return samples


# ---------------------------------------------------------------- schedule


def test_cosine_schedule_endpoints_and_shape():
    lr0, T = 2e-3, 100
    assert cosine_lr(0, T, lr0) == lr0
    assert cosine_lr(T, T, lr0) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(T // 2, T, lr0) == pytest.approx(lr0 / 2, rel=1e-12)
    # quartile points follow the cosine
    assert cosine_lr(25, T, lr0) == pytest.approx(
        lr0 * 0.5 * (1 + math.cos(math.pi * 0.25)), rel=1e-12)
    assert cosine_lr(75, T, lr0) == pytest.approx(
        lr0 * 0.5 * (1 + math.cos(math.pi * 0.75)), rel=1e-12)
    values = [cosine_lr(s, T, lr0) for s in range(T + 1)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_batches_per_epoch_drops_short_leftover():
    assert _batches_per_epoch(8, 4) == 2
    assert _batches_per_epoch(9, 4) == 2   # leftover of 1 is dropped
    assert _batches_per_epoch(10, 4) == 3  # leftover of 2 is kept
    assert _batches_per_epoch(3, 4) == 1


def test_epoch_batches_permute_and_partition():
    batches = _epoch_batches(10, 4, epoch=0, seed=0)
    flat = [i for b in batches for i in b]
    assert sorted(flat) == list(range(10))
    assert [len(b) for b in batches] == [4, 4, 2]
    # deterministic per (seed, epoch), varies across epochs
    assert batches == _epoch_batches(10, 4, epoch=0, seed=0)
    assert batches != _epoch_batches(10, 4, epoch=1, seed=0)


# ---------------------------------------------------------------- config


def test_train_config_validation():
    TrainConfig().validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1).validate()
    with pytest.raises(ValueError):
        TrainConfig(loss_lambda=-0.1).validate()
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0).validate()


def test_train_config_defaults():
    cfg = TrainConfig()
    assert cfg.learning_rate == 1e-5
    assert cfg.epochs == 30
    assert cfg.batch_size == 4
    assert cfg.loss_lambda == 0.3


def test_train_config_dict_roundtrip():
    cfg = TrainConfig(learning_rate=3e-4, epochs=2, batch_size=4, seed=9)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- the loop


def test_train_runs_and_logs(tiny_config, tmp_path):
    net = Network(tiny_config)
    samples = make_samples(net, 6, tiny_config)
    cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=4, seed=0)
    log_path = tmp_path / "train.jsonl"
    result = train(net, samples, cfg, val_samples=samples[:4],
                   log_path=log_path)
    # 6 samples, batch 4 -> batches of 4 and 2 per epoch
    assert result.steps == 4
    lines = [json.loads(l) for l in log_path.read_text().splitlines()]
    step_lines = [l for l in lines if "step" in l]
    epoch_lines = [l for l in lines if "epoch" in l]
    assert len(step_lines) == 4
    assert len(epoch_lines) == 2
    for line in step_lines:
        assert set(line) >= {"lr", "step", "total", "plcc_part", "rank_part"}
        assert line["total"] == pytest.approx(
            line["plcc_part"] + cfg.loss_lambda * line["rank_part"], abs=1e-9)
    for line in epoch_lines:
        assert set(line) >= {"epoch", "val_srocc", "val_plcc"}
    assert result.val_history == tuple(epoch_lines)


def test_train_learning_rates_follow_schedule(tiny_config, tmp_path):
    net = Network(tiny_config)
    samples = make_samples(net, 4, tiny_config)
    cfg = TrainConfig(learning_rate=1e-3, epochs=3, batch_size=4, seed=0)
    log_path = tmp_path / "train.jsonl"
    train(net, samples, cfg, log_path=log_path)
    lines = [json.loads(l) for l in log_path.read_text().splitlines()]
    lrs = [l["lr"] for l in lines if "lr" in l]
    assert lrs == [cosine_lr(s, 3, 1e-3) for s in range(3)]


def test_train_only_trainable_groups_move(tiny_config):
    net = Network(tiny_config)
    before = {name: [(n, p.detach().clone()) for n, p in params]
              for name, params in net.parameter_groups().items()}
    samples = make_samples(net, 6, tiny_config)
    cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=4, seed=0)
    train(net, samples, cfg)
    after = net.parameter_groups()
    for group, params in after.items():
        frozen = group in FROZEN_GROUPS
        for (name, now), (name2, then) in zip(params, before[group]):
            assert name == name2
            if frozen:
                assert torch.equal(now, then), f"{group}/{name} moved"
        if not frozen:
            moved = any(not torch.equal(now, then)
                        for (_, now), (_, then) in zip(params, before[group]))
            assert moved, f"group {group} never moved"


def test_train_deterministic_checkpoints(tiny_config, tmp_path):
    cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=4, seed=5)
    paths = []
    for run in range(2):
        net = Network(tiny_config)
        samples = make_samples(net, 6, tiny_config)
        train(net, samples, cfg)
        path = tmp_path / f"run{run}.ckpt"
        save_checkpoint(net, path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_train_diverged_error_carries_context(tiny_config):
    net = Network(tiny_config)
    samples = make_samples(net, 4, tiny_config)
    with torch.no_grad():
        net.regressor.proj.weight[0, 0] = float("nan")
    cfg = TrainConfig(learning_rate=1e-3, epochs=1, batch_size=4, seed=0)
    with pytest.raises(TrainDivergedError) as exc:
        train(net, samples, cfg)
    assert exc.value.step == 0
    assert len(exc.value.video_ids) == 4
    assert "v000" in str(exc.value)


def test_train_rejects_tiny_sample_set(tiny_config):
    net = Network(tiny_config)
    samples = make_samples(net, 1, tiny_config)
    with pytest.raises(ValueError):
        train(net, samples, TrainConfig(epochs=1))


def test_build_samples_reads_manifest(tiny_config, manifest_builder, tmp_path):
    manifest = manifest_builder(tmp_path, 4, n_frames=tiny_config.n_frames,
                                size=tiny_config.frame_size)
    path = tmp_path / "manifest.jsonl"
    save_manifest(manifest, path)
    net = Network(tiny_config)
    samples = build_samples(net, manifest, manifest.video_ids(), path)
    assert len(samples) == 4
    for s, vid in zip(samples, manifest.video_ids()):
        assert s.video_id == vid
        assert s.frames.shape == (tiny_config.n_frames, 3,
                                  tiny_config.frame_size,
                                  tiny_config.frame_size)
        assert s.target == manifest.mos[vid].mos_z


def test_build_samples_unknown_video(tiny_config, manifest_builder, tmp_path):
    manifest = manifest_builder(tmp_path, 4)
    net = Network(tiny_config)
    with pytest.raises(KeyError):
        build_samples(net, manifest, ["ghost"], tmp_path / "manifest.jsonl")


def test_build_samples_missing_mos(tiny_config, manifest_builder, tmp_path):
    manifest = manifest_builder(tmp_path, 4, with_mos=False)
    net = Network(tiny_config)
    with pytest.raises(ValueError):
        build_samples(net, manifest, manifest.video_ids(),
                      tmp_path / "manifest.jsonl")
