"""Perceptual hashing and within-video near-duplicate removal.

The hash is a 64-bit difference hash: the image is converted to BT.601
luma, area-averaged down to an 8-row x 9-column grid, and each of the 64
bits records whether a cell is brighter than its right-hand neighbor.
Similarity is 1 - hamming/64; frames at or above the threshold against an
already-kept frame of the same video are duplicates of the earliest match.
"""

from __future__ import annotations

import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .store import FrameRecord

log = logging.getLogger(__name__)

HASH_BITS = 64
_GRID_ROWS = 8
_GRID_COLS = 9  # 9 columns give 8 left-vs-right comparisons per row

# ITU-R BT.601 luma weights, fixed for cross-platform determinism
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass
class DedupConfig:
    threshold: float = 0.8  # similarity at or above this marks a duplicate


class HashError(Exception):
    """Image could not be decoded; the frame is excluded and logged."""


def _area_average(gray: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Exact box average onto an out_rows x out_cols grid.

    Fractional cell edges are weighted by coverage, so the result is
    independent of how the source dimensions divide the grid.
    """
    h, w = gray.shape

    def axis_weights(n: int, out: int) -> np.ndarray:
        # weights[j, i] = overlap of source index i with output cell j
        edges = np.linspace(0.0, n, out + 1)
        weights = np.zeros((out, n), dtype=np.float64)
        for j in range(out):
            lo, hi = edges[j], edges[j + 1]
            i0, i1 = int(np.floor(lo)), int(np.ceil(hi))
            for i in range(i0, min(i1, n)):
                weights[j, i] = min(hi, i + 1) - max(lo, i)
        return weights / (n / out)

    wr = axis_weights(h, out_rows)
    wc = axis_weights(w, out_cols)
    return wr @ gray @ wc.T


def compute_hash(image_bytes: bytes) -> int:
    """64-bit difference hash of an encoded image. Deterministic."""
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
    except Exception as exc:
        raise HashError(f"undecodable image: {exc}")
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    gray = rgb @ _LUMA
    cells = _area_average(gray, _GRID_ROWS, _GRID_COLS)
    bits = 0
    for r in range(_GRID_ROWS):
        for c in range(_GRID_COLS - 1):
            bits = (bits << 1) | int(cells[r, c] > cells[r, c + 1])
    return bits


def hash_to_hex(h: int) -> str:
    return f"{h:016x}"


def hex_to_hash(s: str) -> int:
    return int(s, 16)


def hamming(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def similarity(a: int, b: int) -> float:
    """1 - hamming/64; takes values on the grid {0, 1/64, ..., 1}."""
    return 1.0 - hamming(a, b) / HASH_BITS


def hash_frames(
    frames: list[FrameRecord], run_dir, jobs: int | None = None
) -> list[FrameRecord]:
    """Fill hash_hex for every frame; undecodable frames are dropped with a warning."""
    jobs = jobs or os.cpu_count() or 1

    def one(rec: FrameRecord) -> FrameRecord | None:
        try:
            data = (run_dir / rec.path).read_bytes()
            rec.hash_hex = hash_to_hex(compute_hash(data))
            return rec
        except (OSError, HashError) as exc:
            log.warning("excluding frame %s: %s", rec.path, exc)
            return None

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        hashed = list(pool.map(one, frames))
    return [r for r in hashed if r is not None]


def dedup_video(
    frames: list[FrameRecord], cfg: DedupConfig
) -> tuple[list[FrameRecord], list[tuple[str, int, int, float]]]:
    """Greedy scan in seq order over one video's hashed frames.

    A frame is a duplicate iff its similarity to any already-kept frame is
    >= threshold; the first (lowest-seq) match becomes its representative.
    Returns (kept frames, duplicate table rows (video_id, dup_seq,
    original_seq, similarity)).
    """
    kept: list[tuple[FrameRecord, int]] = []
    dups: list[tuple[str, int, int, float]] = []
    for rec in sorted(frames, key=lambda r: r.seq):
        h = hex_to_hash(rec.hash_hex)
        match = None
        for kept_rec, kept_hash in kept:
            sim = similarity(h, kept_hash)
            if sim >= cfg.threshold:
                match = (kept_rec, sim)
                break
        if match is None:
            rec.duplicate_of = None
            kept.append((rec, h))
        else:
            rec.duplicate_of = match[0].seq
            dups.append((rec.video_id, rec.seq, match[0].seq, match[1]))
    return [r for r, _ in kept], dups


def dedup_all(
    frames: list[FrameRecord], cfg: DedupConfig
) -> tuple[list[FrameRecord], list[tuple[str, int, int, float]]]:
    """Per-video dedup (never across videos); frames returned in input video order."""
    by_video: dict[str, list[FrameRecord]] = {}
    order: list[str] = []
    for rec in frames:
        if rec.video_id not in by_video:
            by_video[rec.video_id] = []
            order.append(rec.video_id)
        by_video[rec.video_id].append(rec)
    kept_all: list[FrameRecord] = []
    dup_rows: list[tuple[str, int, int, float]] = []
    for vid in order:
        kept, dups = dedup_video(by_video[vid], cfg)
        kept_all.extend(kept)
        dup_rows.extend(dups)
    return kept_all, dup_rows
