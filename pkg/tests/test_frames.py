from __future__ import annotations

import random

import pytest
import torch

from t2vqa.model import FrameReadError
from t2vqa.model.frames import frame_indices, load_frame_files, sample_frames

from .oracles import brute_frame_indices


def test_sixteen_to_eight():
    assert frame_indices(16, 8) == [0, 2, 4, 6, 9, 11, 13, 15]


def test_identity_sampling():
    assert frame_indices(8, 8) == list(range(8))


def test_single_frame_repeats():
    assert frame_indices(1, 8) == [0] * 8


def test_single_output_takes_first():
    assert frame_indices(23, 1) == [0]


def test_matches_rounding_oracle():
    rng = random.Random(0)
    for _ in range(300):
        fc = rng.randint(1, 400)
        n = rng.randint(1, 32)
        got = frame_indices(fc, n)
        assert got == brute_frame_indices(fc, n)
        assert got == sorted(got)
        assert all(0 <= i < fc for i in got)


def test_bad_arguments_rejected():
    with pytest.raises(ValueError):
        frame_indices(0, 8)
    with pytest.raises(ValueError):
        frame_indices(8, 0)


def test_sample_frames_shape_and_range(frame_writer, tmp_path):
    d = frame_writer(tmp_path / "v", 6, 16, seed=1)
    frames = sample_frames(d, 6, 4, 16)
    assert frames.shape == (4, 3, 16, 16)
    assert frames.dtype == torch.float64
    assert frames.min() >= 0.0 and frames.max() <= 1.0


def test_sample_frames_resizes(frame_writer, tmp_path):
    d = frame_writer(tmp_path / "v", 3, 24, brightness=0.5)
    frames = sample_frames(d, 3, 3, 16)
    assert frames.shape == (3, 3, 16, 16)
    # flat image stays flat through bilinear resize
    assert torch.allclose(frames, torch.full_like(frames, 128.0 / 255.0), atol=1e-6)


def test_sample_frames_missing_dir(tmp_path):
    with pytest.raises(FrameReadError):
        sample_frames(tmp_path / "nothing", 4, 4, 16)


def test_sample_frames_count_mismatch(frame_writer, tmp_path):
    d = frame_writer(tmp_path / "v", 2, 16, seed=0)
    with pytest.raises(FrameReadError, match="manifest says"):
        sample_frames(d, 5, 4, 16)


def test_corrupt_frame_file(frame_writer, tmp_path):
    d = frame_writer(tmp_path / "v", 2, 16, seed=0)
    (d / "frame_0000.png").write_bytes(b"not a png")
    with pytest.raises(FrameReadError, match="unreadable"):
        sample_frames(d, 2, 2, 16)


def test_load_frame_files_sorted(frame_writer, tmp_path):
    d = frame_writer(tmp_path / "v", 12, 16, seed=0)
    files = load_frame_files(d)
    assert [f.name for f in files] == sorted(f.name for f in files)
    assert len(files) == 12
