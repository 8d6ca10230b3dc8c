"""Pluggable frame captioning: a chat-completions endpoint client and an
offline deterministic stub.

Captions land in a CSV in real time: each record is appended and flushed
the moment its frame finishes, so a killed run loses nothing and can be
resumed (frames already `ok` in the CSV are skipped).
"""

from __future__ import annotations

import base64
import csv
import hashlib
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .store import CAPTIONS_HEADER, CaptionRecord, FrameRecord

log = logging.getLogger(__name__)

DEFAULT_PROMPT = (
    "Directly describe with brevity and as brief as possible the scene or "
    "characters without any introductory phrase like 'This image shows', "
    "'In the scene', 'This image depicts' or similar phrases. If there is a "
    "text in the image mention there is a text but do not caption the text, "
    "just start describing the scene please. If you recognize historical "
    "figures and current celebrities and politicians in the picture give "
    "their full name, but don't give the whole background about who they are."
)

API_KEY_ENV = "VISTOPICS_API_KEY"


@dataclass
class CaptionerConfig:
    kind: str = "stub"  # stub | remote
    prompt: str = DEFAULT_PROMPT
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4o"
    delay_min_sec: float = 1.0
    delay_max_sec: float = 5.0
    max_retries: int = 3
    timeout_sec: float = 60.0
    backoff_base_sec: float = 2.0

    def __post_init__(self):
        if not 0 <= self.delay_min_sec <= self.delay_max_sec:
            raise ValueError("delay range must satisfy 0 <= min <= max")


class CaptionFailure(Exception):
    """Permanent failure for one frame; never aborts the run."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


def encode_image(image_bytes: bytes) -> str:
    """Standard padded base64 of the exact file bytes."""
    if not image_bytes:
        raise ValueError("cannot encode empty image bytes")
    return base64.b64encode(image_bytes).decode("ascii")


class Captioner(Protocol):
    def caption(self, image_bytes: bytes) -> str: ...

    # delay between requests applies only to rate-limited remote endpoints
    paced: bool


class StubCaptioner:
    """Offline captioner: caption depends only on the frame's content hash."""

    paced = False
    last_attempts = 1

    def caption(self, image_bytes: bytes) -> str:
        digest = hashlib.sha256(image_bytes).hexdigest()
        return f"synthetic scene {digest[:8]}"


class RemoteCaptioner:
    """Client for a chat-completions-compatible vision endpoint.

    Retries 429/5xx/timeouts/malformed bodies with exponential backoff;
    other 4xx fail fast for that frame.
    """

    paced = True

    def __init__(self, cfg: CaptionerConfig, session=None):
        import requests

        self.cfg = cfg
        self.session = session or requests.Session()
        self.api_key = os.environ.get(API_KEY_ENV, "")
        self.last_attempts = 0

    def caption(self, image_bytes: bytes) -> str:
        import requests

        body = {
            "model": self.cfg.model_name,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": self.cfg.prompt},
                    {"type": "image_url", "image_url": {
                        "url": f"data:image/jpeg;base64,{encode_image(image_bytes)}",
                    }},
                ],
            }],
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = "exhausted retries"
        for attempt in range(self.cfg.max_retries + 1):
            self.last_attempts = attempt + 1
            if attempt:
                time.sleep(self.cfg.backoff_base_sec * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    self.cfg.endpoint_url, json=body, headers=headers,
                    timeout=self.cfg.timeout_sec,
                )
            except requests.RequestException as exc:
                last_error = f"request error: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise CaptionFailure(f"HTTP {resp.status_code}: {resp.text[:200]}",
                                     attempts=attempt + 1)
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last_error = f"malformed response body: {exc}"
                continue
            if not isinstance(content, str):
                last_error = "malformed response body: content not a string"
                continue
            return content
        raise CaptionFailure(last_error, attempts=self.cfg.max_retries + 1)


def make_captioner(cfg: CaptionerConfig) -> Captioner:
    if cfg.kind == "stub":
        return StubCaptioner()
    if cfg.kind == "remote":
        return RemoteCaptioner(cfg)
    raise ValueError(f"unknown captioner kind: {cfg.kind}")


def caption_one(captioner: Captioner, frame_path: Path, cfg: CaptionerConfig) -> CaptionRecord:
    """Caption one frame; on repeated failure returns status=failed, empty caption."""
    start = time.monotonic()
    try:
        data = Path(frame_path).read_bytes()
    except OSError as exc:
        log.warning("unreadable frame %s: %s", frame_path, exc)
        return CaptionRecord(str(frame_path), "", "failed", 0, 0.0)
    try:
        text = captioner.caption(data)
        attempts = getattr(captioner, "last_attempts", 1)
        return CaptionRecord(str(frame_path), text.strip(), "ok",
                             attempts, time.monotonic() - start)
    except CaptionFailure as exc:
        log.warning("captioning failed for %s: %s", frame_path, exc)
        return CaptionRecord(str(frame_path), "", "failed",
                             exc.attempts, time.monotonic() - start)


@dataclass
class CaptionRunStats:
    requested: int = 0
    ok: int = 0
    failed: int = 0
    skipped: int = 0
    records: list[CaptionRecord] = field(default_factory=list)


def _load_done(csv_path: Path) -> set[str]:
    done: set[str] = set()
    if not csv_path.exists():
        return done
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if row.get("status") == "ok":
                done.add(row["frame_path"])
    return done


def caption_corpus(
    frames: list[FrameRecord],
    run_dir: Path,
    csv_path: Path,
    cfg: CaptionerConfig,
    captioner: Captioner | None = None,
    rng: np.random.Generator | None = None,
) -> CaptionRunStats:
    """Caption retained frames in manifest order, appending to `csv_path` live.

    Only non-duplicate frames are captioned. A uniform random delay in the
    configured range separates consecutive remote requests; the stub runs
    with zero delay. Frames already `ok` in an existing CSV are skipped.
    """
    captioner = captioner or make_captioner(cfg)
    rng = rng or np.random.default_rng()
    retained = [f for f in frames if f.duplicate_of is None]
    done = _load_done(csv_path)
    stats = CaptionRunStats()

    csv_path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not csv_path.exists()
    with open(csv_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new_file:
            writer.writerow(CAPTIONS_HEADER)
            fh.flush()
        first = True
        for frame in retained:
            if frame.path in done:
                stats.skipped += 1
                continue
            if captioner.paced and not first:
                time.sleep(rng.uniform(cfg.delay_min_sec, cfg.delay_max_sec))
            first = False
            rec = caption_one(captioner, Path(run_dir) / frame.path, cfg)
            rec.frame_path = frame.path  # keep manifest-relative paths in the CSV
            stats.requested += 1
            stats.ok += rec.status == "ok"
            stats.failed += rec.status == "failed"
            stats.records.append(rec)
            writer.writerow([rec.frame_path, rec.caption, rec.status,
                             str(rec.attempts), f"{rec.elapsed_sec:.3f}"])
            fh.flush()
            os.fsync(fh.fileno())
    return stats
