"""Rating-collection HTTP service.

Serves assignment, rating submission, progress, and raw frame files to
the study UI.  Every accepted rating is appended to a JSON-lines store
and fsynced before the request is acknowledged, so a crash never loses
an acknowledged score.  Assignment hands each annotator the unrated
video with the fewest stored ratings; an issued assignment stays
pinned to its annotator until submitted or expired.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse
from pydantic import BaseModel, Field

from .manifest import (
    DatasetManifest,
    RatingRecord,
    parse_records,
    resolve_frames_path,
)
from .model import FrameReadError, load_frame_files

PENDING_TTL_SECONDS = 1800.0  # assignments expire after 30 minutes


class RatingSubmission(BaseModel):
    annotator_id: str = Field(min_length=1)
    video_id: str = Field(min_length=1)
    raw_score: float = Field(ge=0.0, le=100.0)


class RatingAck(BaseModel):
    status: str
    stored: int


class AssignmentResponse(BaseModel):
    video_id: str
    prompt_text: str
    frame_urls: list[str]
    fps: float


class ProgressResponse(BaseModel):
    total: int
    rated: int
    per_annotator: dict[str, int]


class RatingStore:
    """Append-only JSON-lines store of rating records."""

    def __init__(self, path: str | Path, now: Callable[[], float] = time.time):
        self.path = Path(path)
        self._now = now
        self._lock = threading.Lock()
        self._seen: set[tuple[str, str]] = set()
        self._per_video: dict[str, int] = {}
        self._per_annotator: dict[str, int] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for record in parse_records(fh, require_header=False):
                    if isinstance(record, RatingRecord):
                        self._absorb(record)

    def _absorb(self, record: RatingRecord) -> None:
        self._seen.add((record.annotator_id, record.video_id))
        self._per_video[record.video_id] = (
            self._per_video.get(record.video_id, 0) + 1)
        self._per_annotator[record.annotator_id] = (
            self._per_annotator.get(record.annotator_id, 0) + 1)

    def has(self, annotator_id: str, video_id: str) -> bool:
        return (annotator_id, video_id) in self._seen

    def count_for_video(self, video_id: str) -> int:
        return self._per_video.get(video_id, 0)

    def per_annotator(self) -> dict[str, int]:
        return dict(self._per_annotator)

    def rated_video_count(self) -> int:
        return len(self._per_video)

    def total_ratings(self) -> int:
        return len(self._seen)

    def append(self, annotator_id: str, video_id: str, raw_score: float) -> RatingRecord:
        """Persist one rating; raises on duplicate. Durable before return."""
        with self._lock:
            if (annotator_id, video_id) in self._seen:
                raise DuplicateRatingError(annotator_id, video_id)
            stamp = datetime.fromtimestamp(
                float(self._now()), tz=timezone.utc).isoformat()
            record = RatingRecord(
                annotator_id=annotator_id, video_id=video_id,
                raw_score=raw_score, timestamp=stamp)
            record.validate()
            line = json.dumps({
                "kind": "rating",
                "annotator_id": record.annotator_id,
                "video_id": record.video_id,
                "raw_score": record.raw_score,
                "timestamp": record.timestamp,
            }, sort_keys=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._absorb(record)
            return record


class DuplicateRatingError(Exception):
    def __init__(self, annotator_id: str, video_id: str):
        super().__init__(
            f"annotator {annotator_id!r} already rated video {video_id!r}")


@dataclass
class PendingAssignment:
    video_id: str
    issued_at: float


class AssignmentBook:
    """Tracks the single pending assignment each annotator may hold."""

    def __init__(self, manifest: DatasetManifest, store: RatingStore,
                 now: Callable[[], float] = time.time,
                 ttl: float = PENDING_TTL_SECONDS):
        self._manifest = manifest
        self._store = store
        self._now = now
        self._ttl = ttl
        self._lock = threading.Lock()
        self._pending: dict[str, PendingAssignment] = {}
        # manifest order is the last tie-breaker so issuance is stable
        self._video_order = {v: i for i, v in enumerate(manifest.videos)}

    def _expire(self) -> None:
        cutoff = self._now() - self._ttl
        stale = [a for a, p in self._pending.items() if p.issued_at <= cutoff]
        for annotator in stale:
            del self._pending[annotator]

    def _reserved_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for pending in self._pending.values():
            counts[pending.video_id] = counts.get(pending.video_id, 0) + 1
        return counts

    def next_for(self, annotator_id: str) -> str | None:
        """Issue (or re-issue) the annotator's assignment, or None if done."""
        with self._lock:
            self._expire()
            held = self._pending.get(annotator_id)
            if held is not None and not self._store.has(annotator_id, held.video_id):
                return held.video_id
            reserved = self._reserved_counts()
            candidates = [
                vid for vid in self._manifest.videos
                if not self._store.has(annotator_id, vid)
            ]
            if not candidates:
                return None
            vid = min(candidates, key=lambda v: (
                self._store.count_for_video(v),
                reserved.get(v, 0),
                self._video_order[v],
            ))
            self._pending[annotator_id] = PendingAssignment(
                video_id=vid, issued_at=self._now())
            return vid

    def clear(self, annotator_id: str, video_id: str) -> None:
        with self._lock:
            held = self._pending.get(annotator_id)
            if held is not None and held.video_id == video_id:
                del self._pending[annotator_id]


def create_app(manifest: DatasetManifest, store_path: str | Path, *,
               manifest_path: str | Path | None = None,
               ui_dir: str | Path | None = None,
               now: Callable[[], float] = time.time,
               pending_ttl: float = PENDING_TTL_SECONDS) -> FastAPI:
    manifest.validate()
    store = RatingStore(store_path, now=now)
    book = AssignmentBook(manifest, store, now=now, ttl=pending_ttl)
    app = FastAPI(title="rating service")
    app.state.store = store
    app.state.book = book

    @app.get("/api/assignment", response_model=AssignmentResponse)
    def get_assignment(annotator: str = Query(min_length=1)):
        video_id = book.next_for(annotator)
        if video_id is None:
            raise HTTPException(
                status_code=404,
                detail=f"annotator {annotator!r} has rated every video")
        video = manifest.videos[video_id]
        prompt = manifest.prompts[video.prompt_id]
        return AssignmentResponse(
            video_id=video_id,
            prompt_text=prompt.text,
            frame_urls=[
                f"/frames/{video_id}/{i}" for i in range(video.frame_count)],
            fps=video.fps,
        )

    @app.post("/api/rating", response_model=RatingAck)
    def post_rating(submission: RatingSubmission):
        if submission.video_id not in manifest.videos:
            raise HTTPException(
                status_code=422,
                detail=f"unknown video {submission.video_id!r}")
        try:
            store.append(submission.annotator_id, submission.video_id,
                         submission.raw_score)
        except DuplicateRatingError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        book.clear(submission.annotator_id, submission.video_id)
        return RatingAck(status="accepted", stored=store.total_ratings())

    @app.get("/api/progress", response_model=ProgressResponse)
    def get_progress():
        return ProgressResponse(
            total=len(manifest.videos),
            rated=store.rated_video_count(),
            per_annotator=store.per_annotator(),
        )

    @app.get("/frames/{video_id}/{index}")
    def get_frame(video_id: str, index: int):
        if video_id not in manifest.videos:
            raise HTTPException(status_code=404, detail=f"unknown video {video_id!r}")
        frames_dir = resolve_frames_path(manifest.videos[video_id], manifest_path)
        try:
            files = load_frame_files(frames_dir)
        except FrameReadError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if not 0 <= index < len(files):
            raise HTTPException(
                status_code=404,
                detail=f"video {video_id!r} has {len(files)} frames")
        return FileResponse(files[index])

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
