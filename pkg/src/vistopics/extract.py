"""Frame extraction: sample each video at a target rate via a decoder subprocess.

Sampling rule: stride = round(native_fps / target_fps), clamped to >= 1;
native frame index i is selected iff i % stride == 0, so a non-partial
video yields floor((total_frames - 1) / stride) + 1 frames. Index 0 is
always selected (sampling anchored at stream start).
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .store import CorpusStore, FrameRecord, VideoEntry

log = logging.getLogger(__name__)


class ProbeError(Exception):
    """Video could not be probed; the file is skipped and recorded."""


@dataclass
class ExtractionConfig:
    target_fps: float = 1.0
    jpeg_quality: int = 90


@dataclass
class DecoderConfig:
    """How to spawn the decoder. Empty path means the bundled decoder.

    Argument templates may reference {input}; the contract they must honor
    is documented in vistopics.decoder.
    """

    path: str = ""
    probe_args: list[str] = field(default_factory=lambda: ["probe", "{input}"])
    decode_args: list[str] = field(default_factory=lambda: ["decode", "{input}"])

    def command(self, template: list[str], input_path: str) -> list[str]:
        exe = self.path or os.environ.get("VISTOPICS_DECODER", "")
        base = [exe] if exe else [sys.executable, "-m", "vistopics.decoder"]
        return base + [arg.replace("{input}", input_path) for arg in template]


def compute_stride(native_fps: float, target_fps: float) -> int:
    """round(native/target), half away from zero, minimum 1."""
    if target_fps > native_fps:
        log.warning("target fps %.3g exceeds native %.3g; clamping to native", target_fps, native_fps)
        return 1
    return max(1, int(math.floor(native_fps / target_fps + 0.5)))


def expected_frame_count(total_frames: int, stride: int) -> int:
    if total_frames <= 0:
        return 0
    return (total_frames - 1) // stride + 1


def probe_video(path: Path, decoder: DecoderConfig | None = None) -> VideoEntry:
    """Fill a VideoEntry from container metadata via the decoder's probe mode."""
    decoder = decoder or DecoderConfig()
    path = Path(path)
    if not path.is_file():
        raise ProbeError(f"no such file: {path}")
    cmd = decoder.command(decoder.probe_args, str(path))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ProbeError(f"probe failed for {path.name}: {proc.stderr.strip() or proc.returncode}")
    try:
        meta = json.loads(proc.stdout)
        fps = float(meta["fps"])
        total = int(meta["frame_count"])
    except (ValueError, KeyError) as exc:
        raise ProbeError(f"malformed probe output for {path.name}: {exc}")
    if fps <= 0 or total < 0:
        raise ProbeError(f"implausible metadata for {path.name}: fps={fps} frames={total}")
    fps_min, fps_max = meta.get("fps_min"), meta.get("fps_max")
    if fps_min and fps_max and fps_max > 1.1 * fps_min:
        log.warning("%s is variable frame rate (%.3g-%.3g fps); using average %.3g",
                    path.name, fps_min, fps_max, fps)
    return VideoEntry(
        video_id=path.stem,
        path=str(path),
        native_fps=fps,
        total_frames=total,
        duration_sec=float(meta.get("duration_sec", total / fps)),
    )


def extract_frames(
    video: VideoEntry,
    store: CorpusStore,
    cfg: ExtractionConfig,
    decoder: DecoderConfig | None = None,
) -> list[FrameRecord]:
    """Decode `video` and write the sampled frames as JPEGs under the run dir.

    On a mid-stream decode failure the frames extracted so far are kept and
    `video.partial` is set.
    """
    decoder = decoder or DecoderConfig()
    stride = compute_stride(video.native_fps, cfg.target_fps)
    out_dir = store.video_frames_dir(video.video_id)
    out_dir.mkdir(parents=True, exist_ok=True)
    for stale in out_dir.glob("frame_*.jpg"):
        stale.unlink()  # re-extraction replaces, never merges

    cmd = decoder.command(decoder.decode_args, video.path)
    proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    records: list[FrameRecord] = []
    try:
        header = proc.stdout.readline()
        try:
            meta = json.loads(header)
            width, height = int(meta["width"]), int(meta["height"])
        except (ValueError, KeyError):
            proc.kill()
            stderr = proc.stderr.read().decode(errors="replace")
            raise ProbeError(f"decoder emitted no header for {video.video_id}: {stderr.strip()}")
        frame_bytes = width * height * 3
        index = 0
        seq = 0
        while True:
            chunk = proc.stdout.read(frame_bytes)
            if len(chunk) < frame_bytes:
                break
            if index % stride == 0:
                seq += 1
                rel = store.frame_path(video.video_id, seq)
                img = Image.frombytes("RGB", (width, height), chunk)
                buf = io.BytesIO()
                img.save(buf, format="JPEG", quality=cfg.jpeg_quality)
                (store.run_dir / rel).write_bytes(buf.getvalue())
                records.append(FrameRecord(
                    video_id=video.video_id,
                    seq=seq,
                    source_frame_index=index,
                    timestamp_sec=index / video.native_fps,
                    path=rel,
                ))
            index += 1
    finally:
        proc.stdout.close()
        stderr = proc.stderr.read().decode(errors="replace")
        proc.stderr.close()
        proc.wait()
    if proc.returncode != 0:
        video.partial = True
        log.warning("decode of %s ended early (%s); keeping %d extracted frames",
                    video.video_id, stderr.strip() or proc.returncode, len(records))
    return records


def extract_all(
    videos: list[VideoEntry],
    store: CorpusStore,
    cfg: ExtractionConfig,
    decoder: DecoderConfig | None = None,
    jobs: int | None = None,
) -> list[FrameRecord]:
    """Extract every video on a bounded worker pool; records merged in video order."""
    jobs = jobs or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        per_video = list(pool.map(
            lambda v: extract_frames(v, store, cfg, decoder), videos
        ))
    merged: list[FrameRecord] = []
    for recs in per_video:
        merged.extend(recs)
    return merged
