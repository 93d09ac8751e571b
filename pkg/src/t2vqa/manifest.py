"""Dataset manifest: prompts, videos, ratings, and MOS records.

The on-disk format is JSON-lines, one object per line with a ``kind``
discriminator (header|prompt|video|rating|mos).  Manifests are immutable
after load and validated as a whole: a malformed file raises a structured
error instead of yielding a partial manifest.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

FORMAT_NAME = "t2vqa-manifest"
FORMAT_VERSION = 1

PROMPT_CATEGORIES = ("nature", "human", "artificial", "animal", "object", "abstract", "others")

RATINGS_CSV_HEADER = ["annotator_id", "video_id", "raw_score", "timestamp"]


class ManifestError(ValueError):
    """Structured manifest failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, *, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PromptRecord:
    prompt_id: str
    text: str
    category: Optional[str] = None
    group_id: Optional[int] = None

    def validate(self) -> None:
        if not self.prompt_id:
            raise ManifestError("prompt_id must be non-empty")
        if not self.text:
            raise ManifestError(f"prompt {self.prompt_id!r}: text must be non-empty")
        if self.category is not None and self.category not in PROMPT_CATEGORIES:
            raise ManifestError(
                f"prompt {self.prompt_id!r}: category {self.category!r} not in {PROMPT_CATEGORIES}"
            )


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    prompt_id: str
    generator: str
    frames_path: str
    frame_count: int
    width: int
    height: int
    fps: float

    def validate(self) -> None:
        if not self.video_id:
            raise ManifestError("video_id must be non-empty")
        if self.frame_count < 1:
            raise ManifestError(f"video {self.video_id!r}: frame_count must be >= 1")
        if self.width < 8 or self.height < 8:
            raise ManifestError(f"video {self.video_id!r}: width and height must be >= 8")
        if self.fps <= 0:
            raise ManifestError(f"video {self.video_id!r}: fps must be positive")


@dataclass(frozen=True)
class RatingRecord:
    annotator_id: str
    video_id: str
    raw_score: float
    timestamp: str

    def validate(self) -> None:
        if not self.annotator_id:
            raise ManifestError("annotator_id must be non-empty")
        if not (0.0 <= self.raw_score <= 100.0):
            raise ManifestError(
                f"rating ({self.annotator_id!r}, {self.video_id!r}): "
                f"raw_score {self.raw_score} outside [0, 100]"
            )


@dataclass(frozen=True)
class MosRecord:
    video_id: str
    mos_z: float
    n_ratings: int

    def validate(self) -> None:
        if self.n_ratings < 1:
            raise ManifestError(f"mos {self.video_id!r}: n_ratings must be >= 1")
        if not math.isfinite(self.mos_z):
            raise ManifestError(f"mos {self.video_id!r}: mos_z must be finite")


@dataclass(frozen=True)
class Fold:
    fold_index: int
    train_video_ids: tuple[str, ...]
    test_video_ids: tuple[str, ...]

    def validate(self) -> None:
        if not self.train_video_ids or not self.test_video_ids:
            raise ManifestError(
                f"fold {self.fold_index}: train and test must be non-empty")
        overlap = set(self.train_video_ids) & set(self.test_video_ids)
        if overlap:
            raise ManifestError(
                f"fold {self.fold_index}: train/test overlap {sorted(overlap)[:5]}")


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    folds: tuple[Fold, ...]

    def validate(self) -> None:
        if not self.folds:
            raise ManifestError("split plan holds no folds")
        for i, fold in enumerate(self.folds):
            if fold.fold_index != i:
                raise ManifestError(
                    f"fold indices must be 0..{len(self.folds) - 1} in order")
            fold.validate()
        universe = set(self.folds[0].train_video_ids) | set(
            self.folds[0].test_video_ids)
        for fold in self.folds[1:]:
            if set(fold.train_video_ids) | set(fold.test_video_ids) != universe:
                raise ManifestError(
                    f"fold {fold.fold_index} covers a different video set")


@dataclass
class DatasetManifest:
    """Cross-validated container for one dataset.

    ``prompts`` and ``videos`` preserve file order; ``ratings`` is a flat
    list; ``mos`` maps video_id to its MOS record.
    """

    prompts: dict[str, PromptRecord] = field(default_factory=dict)
    videos: dict[str, VideoRecord] = field(default_factory=dict)
    ratings: list[RatingRecord] = field(default_factory=list)
    mos: dict[str, MosRecord] = field(default_factory=dict)

    def counts(self) -> tuple[int, int, int]:
        return (len(self.prompts), len(self.videos), len(self.ratings))

    def video_ids(self) -> list[str]:
        return list(self.videos)

    def ratings_for_video(self, video_id: str) -> list[RatingRecord]:
        return [r for r in self.ratings if r.video_id == video_id]

    def with_ratings(self, extra: Iterable[RatingRecord]) -> "DatasetManifest":
        """New manifest with additional ratings merged in (re-validated)."""
        merged = DatasetManifest(
            prompts=dict(self.prompts),
            videos=dict(self.videos),
            ratings=list(self.ratings) + list(extra),
            mos=dict(self.mos),
        )
        merged.validate()
        return merged

    def with_mos(self, records: Iterable[MosRecord]) -> "DatasetManifest":
        """New manifest with MOS records replaced by ``records``."""
        merged = DatasetManifest(
            prompts=dict(self.prompts),
            videos=dict(self.videos),
            ratings=list(self.ratings),
            mos={m.video_id: m for m in records},
        )
        merged.validate()
        return merged

    def with_prompts(self, prompts: Iterable[PromptRecord]) -> "DatasetManifest":
        """New manifest with prompt records replaced/updated by id."""
        updated = dict(self.prompts)
        for p in prompts:
            updated[p.prompt_id] = p
        merged = DatasetManifest(
            prompts=updated, videos=dict(self.videos),
            ratings=list(self.ratings), mos=dict(self.mos),
        )
        merged.validate()
        return merged

    def validate(self) -> None:
        for p in self.prompts.values():
            p.validate()
        seen_pairs: set[tuple[str, str]] = set()
        for v in self.videos.values():
            v.validate()
            if v.prompt_id not in self.prompts:
                raise ManifestError(
                    f"video {v.video_id!r} references absent prompt_id {v.prompt_id!r}"
                )
        for r in self.ratings:
            r.validate()
            if r.video_id not in self.videos:
                raise ManifestError(
                    f"rating by {r.annotator_id!r} references absent video_id {r.video_id!r}"
                )
            pair = (r.annotator_id, r.video_id)
            if pair in seen_pairs:
                raise ManifestError(f"duplicate rating for (annotator, video) {pair!r}")
            seen_pairs.add(pair)
        for m in self.mos.values():
            m.validate()
            if m.video_id not in self.videos:
                raise ManifestError(f"mos record references absent video_id {m.video_id!r}")


_KIND_FIELDS = {
    "prompt": ("prompt_id", "text", "category", "group_id"),
    "video": ("video_id", "prompt_id", "generator", "frames_path",
              "frame_count", "width", "height", "fps"),
    "rating": ("annotator_id", "video_id", "raw_score", "timestamp"),
    "mos": ("video_id", "mos_z", "n_ratings"),
}

_OPTIONAL_FIELDS = {"category", "group_id"}


def _record_from_obj(kind: str, obj: dict, line: int):
    fields = _KIND_FIELDS[kind]
    kwargs = {}
    for name in fields:
        if name in obj:
            kwargs[name] = obj[name]
        elif name in _OPTIONAL_FIELDS:
            kwargs[name] = None
        else:
            raise ManifestError(f"{kind} record missing field {name!r}", line=line)
    unknown = set(obj) - set(fields) - {"kind"}
    if unknown:
        raise ManifestError(f"{kind} record has unknown fields {sorted(unknown)}", line=line)
    cls = {"prompt": PromptRecord, "video": VideoRecord,
           "rating": RatingRecord, "mos": MosRecord}[kind]
    try:
        rec = cls(**kwargs)
        rec.validate()
    except ManifestError as e:
        if e.line is None:
            raise ManifestError(str(e), line=line) from None
        raise
    except (TypeError, ValueError) as e:
        raise ManifestError(f"bad {kind} record: {e}", line=line) from None
    return rec


def _record_to_obj(rec) -> dict:
    if isinstance(rec, PromptRecord):
        obj = {"kind": "prompt", "prompt_id": rec.prompt_id, "text": rec.text}
        if rec.category is not None:
            obj["category"] = rec.category
        if rec.group_id is not None:
            obj["group_id"] = rec.group_id
        return obj
    if isinstance(rec, VideoRecord):
        return {"kind": "video", "video_id": rec.video_id, "prompt_id": rec.prompt_id,
                "generator": rec.generator, "frames_path": rec.frames_path,
                "frame_count": rec.frame_count, "width": rec.width,
                "height": rec.height, "fps": rec.fps}
    if isinstance(rec, RatingRecord):
        return {"kind": "rating", "annotator_id": rec.annotator_id,
                "video_id": rec.video_id, "raw_score": rec.raw_score,
                "timestamp": rec.timestamp}
    if isinstance(rec, MosRecord):
        return {"kind": "mos", "video_id": rec.video_id, "mos_z": rec.mos_z,
                "n_ratings": rec.n_ratings}
    raise TypeError(f"not a manifest record: {type(rec)!r}")


def parse_records(lines: Iterable[str], *, require_header: bool = True):
    """Parse JSONL lines into record objects, without cross-validation."""
    records = []
    header_seen = False
    for line_no, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ManifestError(f"invalid JSON ({e.msg})", line=line_no) from None
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ManifestError("record must be an object with a 'kind' field", line=line_no)
        kind = obj["kind"]
        if kind == "header":
            if obj.get("format") != FORMAT_NAME:
                raise ManifestError(f"unknown format {obj.get('format')!r}", line=line_no)
            if obj.get("version") != FORMAT_VERSION:
                raise ManifestError(f"unsupported version {obj.get('version')!r}", line=line_no)
            header_seen = True
            continue
        if kind not in _KIND_FIELDS:
            raise ManifestError(f"unknown record kind {kind!r}", line=line_no)
        records.append(_record_from_obj(kind, obj, line_no))
    if require_header and not header_seen:
        raise ManifestError("missing header record", line=1)
    return records


def load_records(path: str | Path):
    """Read a JSONL record file (fragment); no cross-reference validation."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        return parse_records(f)


def save_records(records: Iterable, path: str | Path) -> None:
    """Write records to a JSONL file with a leading header record."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        header = {"kind": "header", "format": FORMAT_NAME, "version": FORMAT_VERSION}
        f.write(json.dumps(header, ensure_ascii=False) + "\n")
        for rec in records:
            f.write(json.dumps(_record_to_obj(rec), ensure_ascii=False) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and fully cross-validate a manifest from a JSONL file."""
    records = load_records(path)
    manifest = DatasetManifest()
    for rec in records:
        if isinstance(rec, PromptRecord):
            if rec.prompt_id in manifest.prompts:
                raise ManifestError(f"duplicate prompt_id {rec.prompt_id!r}")
            manifest.prompts[rec.prompt_id] = rec
        elif isinstance(rec, VideoRecord):
            if rec.video_id in manifest.videos:
                raise ManifestError(f"duplicate video_id {rec.video_id!r}")
            manifest.videos[rec.video_id] = rec
        elif isinstance(rec, RatingRecord):
            manifest.ratings.append(rec)
        elif isinstance(rec, MosRecord):
            if rec.video_id in manifest.mos:
                raise ManifestError(f"duplicate mos record for video {rec.video_id!r}")
            manifest.mos[rec.video_id] = rec
    manifest.validate()
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest as JSONL; ``load_manifest`` round-trips it exactly."""
    manifest.validate()
    records = [
        *manifest.prompts.values(),
        *manifest.videos.values(),
        *manifest.ratings,
        *manifest.mos.values(),
    ]
    save_records(records, path)


def load_ratings_csv(path: str | Path) -> list[RatingRecord]:
    """Ingest ratings from CSV with header annotator_id,video_id,raw_score,timestamp."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("empty ratings CSV", line=1) from None
        if [h.strip() for h in header] != RATINGS_CSV_HEADER:
            raise ManifestError(
                f"ratings CSV header must be {','.join(RATINGS_CSV_HEADER)}", line=1
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ManifestError(f"expected 4 columns, got {len(row)}", line=line_no)
            try:
                score = float(row[2])
            except ValueError:
                raise ManifestError(f"raw_score {row[2]!r} is not a number", line=line_no) from None
            rec = RatingRecord(annotator_id=row[0], video_id=row[1],
                               raw_score=score, timestamp=row[3])
            try:
                rec.validate()
            except ManifestError as e:
                raise ManifestError(str(e), line=line_no) from None
            records.append(rec)
    return records


def resolve_frames_path(video: VideoRecord, manifest_path: Optional[str | Path] = None) -> Path:
    """Resolve a video's frames directory.

    Absolute paths pass through; relative ones resolve against T2VQA_DATA
    when set, else against the manifest file's directory, else the cwd.
    """
    p = Path(video.frames_path)
    if p.is_absolute():
        return p
    root = os.environ.get("T2VQA_DATA")
    if root:
        return Path(root) / p
    if manifest_path is not None:
        return Path(manifest_path).parent / p
    return p


def save_split_plan(plan: SplitPlan, path: str | Path) -> None:
    obj = {
        "seed": plan.seed,
        "folds": [
            {"fold_index": f.fold_index,
             "train_video_ids": list(f.train_video_ids),
             "test_video_ids": list(f.test_video_ids)}
            for f in plan.folds
        ],
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_split_plan(path: str | Path) -> SplitPlan:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    folds = tuple(
        Fold(fold_index=f["fold_index"],
             train_video_ids=tuple(f["train_video_ids"]),
             test_video_ids=tuple(f["test_video_ids"]))
        for f in obj["folds"]
    )
    return SplitPlan(seed=obj["seed"], folds=folds)
