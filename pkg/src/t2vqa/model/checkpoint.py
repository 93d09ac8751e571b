"""Checkpoint archive format.

A checkpoint is an uncompressed zip holding config.json, meta.json, and
one .npy entry per parameter, grouped by parameter-group directory.
Entry order, json key order, and zip timestamps are all pinned so the
same weights always produce byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .network import FROZEN_GROUPS, PARAMETER_GROUPS, Network

FORMAT_VERSION = 1

# Fixed stamp: zip cannot represent dates before 1980.
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(Exception):
    pass


def _entry(name: str, payload: bytes) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def _npy_bytes(value: torch.Tensor) -> bytes:
    buf = io.BytesIO()
    array = np.ascontiguousarray(value.detach().cpu().numpy())
    np.save(buf, array, allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(network: Network, path: str | Path) -> None:
    groups = network.parameter_groups()
    meta = {
        "format_version": FORMAT_VERSION,
        "groups": {
            group: {
                "frozen": group in FROZEN_GROUPS,
                "shapes": {name: list(p.shape) for name, p in params},
            }
            for group, params in groups.items()
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        config_bytes = json.dumps(
            network.config.to_dict(), indent=2, sort_keys=True).encode()
        zf.writestr(_entry("config.json", config_bytes), config_bytes)
        meta_bytes = json.dumps(meta, indent=2, sort_keys=True).encode()
        zf.writestr(_entry("meta.json", meta_bytes), meta_bytes)
        for group in PARAMETER_GROUPS:
            for name, param in sorted(groups[group]):
                payload = _npy_bytes(param)
                zf.writestr(_entry(f"params/{group}/{name}.npy", payload), payload)


def load_checkpoint(path: str | Path) -> Network:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        archive = zipfile.ZipFile(path)
    except zipfile.BadZipFile as e:
        raise CheckpointError(f"not a checkpoint archive: {path}") from e
    with archive as zf:
        names = set(zf.namelist())
        for required in ("config.json", "meta.json"):
            if required not in names:
                raise CheckpointError(f"checkpoint missing {required}")
        config = ModelConfig.from_dict(json.loads(zf.read("config.json")))
        meta = json.loads(zf.read("meta.json"))
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format_version {version!r}")
        network = Network(config)
        expected = set()
        with torch.no_grad():
            for group, params in network.parameter_groups().items():
                for name, param in params:
                    entry = f"params/{group}/{name}.npy"
                    expected.add(entry)
                    if entry not in names:
                        raise CheckpointError(f"checkpoint missing {entry}")
                    array = np.load(io.BytesIO(zf.read(entry)), allow_pickle=False)
                    if tuple(array.shape) != tuple(param.shape):
                        raise CheckpointError(
                            f"{entry}: shape {array.shape} does not match "
                            f"model shape {tuple(param.shape)}")
                    param.copy_(torch.from_numpy(array))
        stray = {n for n in names if n.startswith("params/")} - expected
        if stray:
            raise CheckpointError(
                f"checkpoint holds unknown entries: {sorted(stray)[:3]}")
    return network
