from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from t2vqa.manifest import (
    DatasetManifest,
    MosRecord,
    PromptRecord,
    VideoRecord,
)
from t2vqa.model import ModelConfig


@pytest.fixture
def tiny_config():
    """Smallest config that still exercises every architectural path.

    Fidelity grid is (2, 4, 4) tokens with a (1, 2, 2) window, so block 1
    runs with a genuine spatial shift.
    """
    return ModelConfig(
        n_frames=4,
        frame_size=16,
        patch_size=8,
        align_dim=16,
        fidelity_dim=16,
        fidelity_patch=(2, 4, 4),
        window_size=(1, 2, 2),
        n_fidelity_blocks=2,
        fusion_dim=16,
        n_fusion_blocks=2,
        decoder_dim=16,
        n_decoder_blocks=1,
        n_frame_blocks=1,
        n_text_blocks=1,
        n_heads=2,
        ffn_ratio=2,
        vocab_size=64,
        max_text_len=16,
        seed=0,
    )


def write_video_frames(frames_dir, n_frames, size, *, brightness=None, seed=None):
    """Write n_frames PNG stills; either flat at `brightness` in [0,1] or
    seeded noise. Returns the directory."""
    frames_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0 if seed is None else seed)
    for i in range(n_frames):
        if brightness is not None:
            level = int(round(brightness * 255))
            arr = np.full((size, size, 3), level, dtype=np.uint8)
        else:
            arr = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        Image.fromarray(arr, "RGB").save(frames_dir / f"frame_{i:04d}.png")
    return frames_dir


@pytest.fixture
def frame_writer():
    return write_video_frames


def build_manifest(tmp_path, n_videos, *, n_frames=4, size=16, with_mos=True,
                   n_prompts=None, brightness_fn=None, seed=0):
    """Synthetic manifest with frames on disk under tmp_path/frames.

    brightness_fn(i) in [0,1] sets video i's flat frame level; default is
    an ascending ladder. MOS defaults to 10 + 5*i so order matches the
    ladder.
    """
    if n_prompts is None:
        n_prompts = max(1, n_videos // 2)
    if brightness_fn is None:
        brightness_fn = lambda i: (i + 1) / (n_videos + 1)
    prompts = {}
    for p in range(n_prompts):
        pid = f"p{p:03d}"
        prompts[pid] = PromptRecord(prompt_id=pid, text=f"a scene number {p}",
                                    category=None, group_id=None)
    videos = {}
    mos = {}
    for i in range(n_videos):
        vid = f"v{i:03d}"
        pid = f"p{i % n_prompts:03d}"
        frames_dir = tmp_path / "frames" / vid
        write_video_frames(frames_dir, n_frames, size,
                           brightness=brightness_fn(i), seed=seed + i)
        videos[vid] = VideoRecord(
            video_id=vid, prompt_id=pid, generator=f"gen{i % 3}",
            frames_path=str(frames_dir), frame_count=n_frames,
            width=size, height=size, fps=8.0)
        if with_mos:
            mos[vid] = MosRecord(video_id=vid, mos_z=10.0 + 5.0 * i, n_ratings=3)
    manifest = DatasetManifest(prompts=prompts, videos=videos, ratings=[],
                               mos=mos)
    manifest.validate()
    return manifest


@pytest.fixture
def manifest_builder():
    return build_manifest
