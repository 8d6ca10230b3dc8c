"""On-disk layout and manifest persistence for every pipeline stage.

A run directory looks like::

    <run>/
      run.json                     # config snapshot, seed, stage timings
      frames/<video_id>/frame_<seq>.jpg
      manifests/videos.csv
      manifests/frames.csv
      manifests/duplicates.csv
      manifests/captions.csv
      manifests/corpus.json
      manifests/model.json
      manifests/sweep.csv
      reports/                     # topics.json, topics.html, metrics.*
      validation/                  # validation_items.json, responses.jsonl, scores.json

Manifests are snapshots: re-running a stage replaces its manifest, never
merges. All writes go through a temp-file-plus-rename so a crash never
leaves a truncated file under the final name.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

VIDEO_EXTENSIONS = {".mp4", ".mkv", ".webm", ".mov"}

VIDEOS_HEADER = ["video_id", "path", "native_fps", "total_frames", "duration_sec", "partial"]
FRAMES_HEADER = ["video_id", "seq", "source_frame_index", "timestamp_sec", "path", "hash_hex", "duplicate_of"]
DUPLICATES_HEADER = ["video_id", "duplicate_seq", "original_seq", "similarity"]
CAPTIONS_HEADER = ["frame_path", "caption", "status", "attempts", "elapsed_sec"]
SWEEP_HEADER = ["K", "alpha", "fold", "perplexity"]


class StoreError(Exception):
    """Fatal persistence problem (I/O failure, schema mismatch)."""


class StageNotRunError(StoreError):
    """A stage's manifest is missing; names the command that produces it."""

    def __init__(self, stage: str, command: str):
        super().__init__(f"stage '{stage}' has not been run; run `vistopics {command}` first")
        self.stage = stage
        self.command = command


@dataclass
class VideoEntry:
    video_id: str
    path: str
    native_fps: float
    total_frames: int
    duration_sec: float
    partial: bool = False


@dataclass
class FrameRecord:
    video_id: str
    seq: int  # 1-based extraction order within the video
    source_frame_index: int  # index in the native stream
    timestamp_sec: float
    path: str  # run-relative, frames/<video_id>/frame_<seq>.jpg
    hash_hex: str = ""  # 16 lowercase hex digits once hashed, else empty
    duplicate_of: Optional[int] = None  # seq of the retained representative


@dataclass
class CaptionRecord:
    frame_path: str
    caption: str
    status: str  # ok | failed | skipped
    attempts: int
    elapsed_sec: float


@dataclass
class StageTiming:
    total_time_sec: float
    n_items: int
    avg_time_per_video_sec: Optional[float] = None
    avg_time_per_frame_sec: Optional[float] = None
    total_bytes: int = 0
    extra: dict = field(default_factory=dict)


def slugify(name: str) -> str:
    """Stable filesystem-safe id from a video filename stem."""
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    return slug or "video"


def scan_videos(input_dir: Path, prober: Callable[[Path], VideoEntry]) -> list[VideoEntry]:
    """Enumerate video files in lexicographic order and probe each one.

    `prober` fills in fps/frame-count metadata (see extract.probe_video);
    files it rejects are skipped with a warning. Ids are slugs of the
    filename stem, deduplicated with numeric suffixes.
    """
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise StoreError(f"input directory not readable: {input_dir}")
    entries: list[VideoEntry] = []
    seen: dict[str, int] = {}
    for path in sorted(input_dir.iterdir(), key=lambda p: p.name):
        if path.suffix.lower() not in VIDEO_EXTENSIONS or not path.is_file():
            continue
        try:
            entry = prober(path)
        except Exception as exc:
            log.warning("skipping unprobeable video %s: %s", path.name, exc)
            continue
        base = slugify(path.stem)
        n = seen.get(base, 0) + 1
        seen[base] = n
        entry.video_id = base if n == 1 else f"{base}_{n}"
        entries.append(entry)
    return entries


def _fmt_float(x: float) -> str:
    # repr round-trips float64 exactly and is stable across runs
    return repr(float(x))


def atomic_write_text(path: Path, text: str) -> Path:
    """Write text via temp file + rename; removes the temp file on failure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


class CorpusStore:
    """Anchors all stage artifacts under one run directory."""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)

    # -- layout ---------------------------------------------------------

    @property
    def manifests_dir(self) -> Path:
        return self.run_dir / "manifests"

    @property
    def frames_dir(self) -> Path:
        return self.run_dir / "frames"

    @property
    def reports_dir(self) -> Path:
        return self.run_dir / "reports"

    @property
    def validation_dir(self) -> Path:
        return self.run_dir / "validation"

    @property
    def run_json_path(self) -> Path:
        return self.run_dir / "run.json"

    def video_frames_dir(self, video_id: str) -> Path:
        return self.frames_dir / video_id

    def frame_path(self, video_id: str, seq: int) -> str:
        # run-relative; the paper's frame_<seq> naming
        return f"frames/{video_id}/frame_{seq}.jpg"

    def manifest_path(self, stage: str) -> Path:
        suffix = ".json" if stage in ("corpus", "model") else ".csv"
        return self.manifests_dir / f"{stage}{suffix}"

    # -- CSV manifests ---------------------------------------------------

    def _write_csv(self, path: Path, header: list[str], rows: Iterable[list[str]]) -> Path:
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
        try:
            return atomic_write_text(path, buf.getvalue())
        except OSError as exc:
            raise StoreError(f"failed to write manifest {path}: {exc}") from exc

    def _read_csv(self, path: Path, header: list[str], stage: str, command: str) -> list[dict]:
        if not path.exists():
            raise StageNotRunError(stage, command)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                got = next(reader)
            except StopIteration:
                raise StoreError(f"manifest {path} is empty (no header)")
            if got != header:
                raise StoreError(
                    f"schema mismatch in {path}: expected columns {header}, found {got}"
                )
            return [dict(zip(header, row)) for row in reader]

    def write_video_manifest(self, videos: list[VideoEntry]) -> Path:
        rows = [
            [v.video_id, v.path, _fmt_float(v.native_fps), str(v.total_frames),
             _fmt_float(v.duration_sec), "1" if v.partial else "0"]
            for v in videos
        ]
        return self._write_csv(self.manifest_path("videos"), VIDEOS_HEADER, rows)

    def write_frame_manifest(self, records: list[FrameRecord]) -> Path:
        rows = [
            [r.video_id, str(r.seq), str(r.source_frame_index), _fmt_float(r.timestamp_sec),
             r.path, r.hash_hex, "" if r.duplicate_of is None else str(r.duplicate_of)]
            for r in records
        ]
        return self._write_csv(self.manifest_path("frames"), FRAMES_HEADER, rows)

    def write_duplicate_table(self, rows: list[tuple[str, int, int, float]]) -> Path:
        out = [[vid, str(dup), str(orig), f"{sim:.4f}"] for vid, dup, orig, sim in rows]
        return self._write_csv(self.manifest_path("duplicates"), DUPLICATES_HEADER, out)

    def write_sweep_table(self, rows: list[tuple[int, float, int, float]]) -> Path:
        out = [[str(k), _fmt_float(a), str(f), _fmt_float(p)] for k, a, f, p in rows]
        return self._write_csv(self.manifest_path("sweep"), SWEEP_HEADER, out)

    # -- typed loaders ----------------------------------------------------

    def load_videos(self) -> list[VideoEntry]:
        raw = self._read_csv(self.manifest_path("videos"), VIDEOS_HEADER, "videos", "extract")
        return [
            VideoEntry(
                video_id=r["video_id"], path=r["path"], native_fps=float(r["native_fps"]),
                total_frames=int(r["total_frames"]), duration_sec=float(r["duration_sec"]),
                partial=r["partial"] == "1",
            )
            for r in raw
        ]

    def load_frames(self) -> list[FrameRecord]:
        raw = self._read_csv(self.manifest_path("frames"), FRAMES_HEADER, "frames", "extract")
        return [
            FrameRecord(
                video_id=r["video_id"], seq=int(r["seq"]),
                source_frame_index=int(r["source_frame_index"]),
                timestamp_sec=float(r["timestamp_sec"]), path=r["path"],
                hash_hex=r["hash_hex"],
                duplicate_of=None if r["duplicate_of"] == "" else int(r["duplicate_of"]),
            )
            for r in raw
        ]

    def load_duplicates(self) -> list[dict]:
        return self._read_csv(self.manifest_path("duplicates"), DUPLICATES_HEADER, "duplicates", "dedup")

    def load_captions(self) -> list[CaptionRecord]:
        """Captions CSV is append-only across resumes; the last row per frame wins."""
        raw = self._read_csv(self.manifest_path("captions"), CAPTIONS_HEADER, "captions", "caption")
        by_frame: dict[str, CaptionRecord] = {}
        for r in raw:
            by_frame[r["frame_path"]] = CaptionRecord(
                frame_path=r["frame_path"], caption=r["caption"], status=r["status"],
                attempts=int(r["attempts"]), elapsed_sec=float(r["elapsed_sec"]),
            )
        return list(by_frame.values())

    def load_sweep(self) -> list[dict]:
        return self._read_csv(self.manifest_path("sweep"), SWEEP_HEADER, "sweep", "sweep")

    def load_corpus_json(self) -> dict:
        return self._load_json_manifest("corpus", "preprocess")

    def load_model_json(self) -> dict:
        return self._load_json_manifest("model", "fit")

    def _load_json_manifest(self, stage: str, command: str) -> dict:
        path = self.manifest_path(stage)
        if not path.exists():
            raise StageNotRunError(stage, command)
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise StoreError(
                f"schema mismatch in {path}: schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        return doc

    def write_json_manifest(self, stage: str, doc: dict) -> Path:
        doc = {"schema_version": SCHEMA_VERSION, **doc}
        return atomic_write_text(self.manifest_path(stage), json.dumps(doc, indent=1))

    def load_stage(self, stage: str):
        """Uniform accessor used by the CLI prerequisite checks."""
        loaders = {
            "videos": self.load_videos,
            "frames": self.load_frames,
            "duplicates": self.load_duplicates,
            "captions": self.load_captions,
            "corpus": self.load_corpus_json,
            "model": self.load_model_json,
            "sweep": self.load_sweep,
        }
        if stage not in loaders:
            raise ValueError(f"unknown stage: {stage}")
        return loaders[stage]()

    # -- run manifest ------------------------------------------------------

    def read_run_manifest(self) -> dict:
        if not self.run_json_path.exists():
            return {"schema_version": SCHEMA_VERSION, "stages": {}}
        with open(self.run_json_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise StoreError(f"schema mismatch in {self.run_json_path}")
        return doc

    def record_stage(self, stage: str, timing: StageTiming) -> None:
        doc = self.read_run_manifest()
        stages = doc.setdefault("stages", {})
        stages[stage] = {
            "total_time_sec": timing.total_time_sec,
            "n_items": timing.n_items,
            "avg_time_per_video_sec": timing.avg_time_per_video_sec,
            "avg_time_per_frame_sec": timing.avg_time_per_frame_sec,
            "total_bytes": timing.total_bytes,
            **timing.extra,
        }
        atomic_write_text(self.run_json_path, json.dumps(doc, indent=1))

    def record_config(self, snapshot: dict, seed: int) -> None:
        doc = self.read_run_manifest()
        doc["config"] = snapshot
        doc["seed"] = seed
        atomic_write_text(self.run_json_path, json.dumps(doc, indent=1))

    def update_run_manifest(self, key: str, value) -> None:
        doc = self.read_run_manifest()
        doc[key] = value
        atomic_write_text(self.run_json_path, json.dumps(doc, indent=1))
