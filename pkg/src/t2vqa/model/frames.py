"""Frame sampling and loading from per-frame image directories."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

FRAME_EXTENSIONS = (".png", ".bmp", ".ppm", ".tif", ".tiff")


class FrameReadError(RuntimeError):
    pass


def frame_indices(frame_count: int, n_frames: int) -> list[int]:
    """Uniform sampling indices: round(j * (F-1) / (n-1)), half-up rounding.

    A single-frame video repeats frame 0; n_frames == 1 takes frame 0.
    """
    if frame_count < 1 or n_frames < 1:
        raise ValueError("frame_count and n_frames must be >= 1")
    if frame_count == 1:
        return [0] * n_frames
    if n_frames == 1:
        return [0]
    # integer arithmetic so exact .5 ties round up on every platform
    d = n_frames - 1
    return [(2 * j * (frame_count - 1) + d) // (2 * d) for j in range(n_frames)]


def load_frame_files(frames_dir: str | Path) -> list[Path]:
    """Ordered frame files in a directory (zero-padded numbering sorts correctly)."""
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise FrameReadError(f"frames directory not found: {frames_dir}")
    files = sorted(p for p in frames_dir.iterdir()
                   if p.suffix.lower() in FRAME_EXTENSIONS)
    if not files:
        raise FrameReadError(f"no frame images in {frames_dir}")
    return files


def _read_frame(path: Path) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as e:
        raise FrameReadError(f"unreadable frame file {path}: {e}") from e
    return torch.from_numpy(arr).permute(2, 0, 1)  # (3, H, W)


def sample_frames(frames_dir: str | Path, frame_count: int, n_frames: int,
                  frame_size: int) -> torch.Tensor:
    """Uniformly sample frames and resize to (n_frames, 3, size, size) in [0, 1].

    Bilinear resize with corner-aligned sampling disabled, double precision.
    """
    files = load_frame_files(frames_dir)
    if len(files) < frame_count:
        raise FrameReadError(
            f"{frames_dir}: manifest says {frame_count} frames, found {len(files)}"
        )
    indices = frame_indices(frame_count, n_frames)
    frames = torch.stack([_read_frame(files[i]) for i in indices])
    if frames.shape[-2:] != (frame_size, frame_size):
        frames = F.interpolate(frames, size=(frame_size, frame_size),
                               mode="bilinear", align_corners=False)
    return frames.clamp(0.0, 1.0)
