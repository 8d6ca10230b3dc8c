"""Synthetic data generators: test videos, images with controlled hashes,
and planted-topic corpora for recovery experiments.

Everything here is seeded and deterministic; the experiment scripts and the
acceptance suite both build their inputs from these.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .dedup import HASH_BITS, hamming

_CELL_STEP = 14  # luma step between adjacent grid cells; keeps values in [16, 240]


def image_with_hash(code: int, scale: int = 10) -> bytes:
    """PNG whose difference hash equals `code` exactly.

    Each 8x9 grid cell is a uniform block; walking right-to-left from a
    mid-gray anchor, a set bit makes the left cell brighter than its right
    neighbor and a clear bit strictly darker, so every comparison is
    unambiguous and area-averaging reproduces the block values exactly.
    """
    cells = np.zeros((8, 9), dtype=np.float64)
    for r in range(8):
        cells[r, 8] = 128.0
        for c in range(7, -1, -1):
            bit = (code >> (63 - (r * 8 + c))) & 1
            cells[r, c] = cells[r, c + 1] + (_CELL_STEP if bit else -_CELL_STEP)
    img = np.kron(cells, np.ones((scale, scale))).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def invert_image(image_bytes: bytes) -> bytes:
    """Pixel inversion; flips every comparison, so the hash becomes ~h."""
    img = Image.open(io.BytesIO(image_bytes))
    arr = 255 - np.asarray(img.convert("L"))
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def hash_codes_with_separation(
    n: int, min_distance: int, max_distance: int = HASH_BITS, seed: int = 0
) -> list[int]:
    """n 64-bit codes whose pairwise Hamming distances lie in the given band."""
    rng = np.random.default_rng(seed)
    codes: list[int] = []
    attempts = 0
    while len(codes) < n:
        attempts += 1
        if attempts > 100_000:
            raise RuntimeError("could not satisfy the separation constraints")
        cand = int.from_bytes(rng.bytes(8), "big")
        if all(min_distance <= hamming(cand, c) <= max_distance for c in codes):
            codes.append(cand)
    return codes


def smooth_test_image(seed: int, size: tuple[int, int] = (180, 160)) -> bytes:
    """Natural-looking smooth image: low-frequency random field, strong
    structure at hash-grid scale. Returned as JPEG quality 95."""
    rng = np.random.default_rng(seed)
    h, w = size[1], size[0]
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w), dtype=np.float64)
    for _ in range(6):
        fx, fy = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        amp = rng.uniform(20, 60)
        img += amp * np.sin(2 * np.pi * fx * xx / w + phase[0])
        img += amp * np.sin(2 * np.pi * fy * yy / h + phase[1])
    img = 128 + 110 * img / np.abs(img).max()
    buf = io.BytesIO()
    Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), mode="L").save(
        buf, format="JPEG", quality=95
    )
    return buf.getvalue()


def write_test_video(
    path: Path,
    fps: float,
    n_frames: int,
    size: tuple[int, int] = (96, 72),
    seed: int = 0,
    scene_change_every: float = 1.0,
    repeat_scene_of: dict[int, int] | None = None,
) -> Path:
    """Encode a synthetic video: one block-pattern scene per wall-clock second.

    `repeat_scene_of` maps scene index -> earlier scene index to duplicate,
    which produces exact within-video duplicate frames for dedup tests.
    """
    import cv2

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"mp4v"), fps,
                             size)
    if not writer.isOpened():
        raise RuntimeError(f"cannot open video writer for {path}")
    rng = np.random.default_rng(seed)
    w, h = size
    scenes: dict[int, np.ndarray] = {}
    repeat_scene_of = repeat_scene_of or {}
    try:
        for i in range(n_frames):
            scene_idx = int(i / fps / scene_change_every)
            scene_idx = repeat_scene_of.get(scene_idx, scene_idx)
            if scene_idx not in scenes:
                blocks = rng.integers(0, 256, size=(6, 8), dtype=np.uint8)
                scenes[scene_idx] = np.kron(
                    blocks, np.ones((h // 6, w // 8), dtype=np.uint8)
                )[:h, :w]
            frame = np.stack([scenes[scene_idx]] * 3, axis=-1)
            writer.write(frame)
    finally:
        writer.release()
    return path


def planted_beta(k: int, v: int, seed: int = 0, overlap: float = 0.0) -> np.ndarray:
    """Well-separated topic-term matrix: each topic concentrates on its own
    slice of the vocabulary, with an `overlap` mass spread uniformly."""
    rng = np.random.default_rng(seed)
    beta = np.full((k, v), overlap / v, dtype=np.float64)
    slice_size = v // k
    for t in range(k):
        lo = t * slice_size
        hi = v if t == k - 1 else lo + slice_size
        weights = rng.uniform(0.5, 1.5, size=hi - lo)
        beta[t, lo:hi] += (1.0 - overlap) * weights / weights.sum()
    return beta / beta.sum(axis=1, keepdims=True)


def planted_corpus(
    n_docs: int,
    n_vocab: int,
    k: int,
    alpha: float = 0.1,
    mean_doc_len: float = 50.0,
    seed: int = 0,
    overlap: float = 0.0,
) -> tuple[list[list[int]], np.ndarray, np.ndarray]:
    """Generative LDA corpus from a planted model.

    Returns (docs, true beta, true theta) where theta is the token-weighted
    average of the drawn document mixtures.
    """
    rng = np.random.default_rng(seed)
    beta = planted_beta(k, n_vocab, seed=seed, overlap=overlap)
    docs: list[list[int]] = []
    mixtures = np.zeros((n_docs, k))
    lengths = np.zeros(n_docs)
    for i in range(n_docs):
        mix = rng.dirichlet(np.full(k, alpha))
        length = max(1, int(rng.poisson(mean_doc_len)))
        z = rng.choice(k, size=length, p=mix)
        words = [int(rng.choice(n_vocab, p=beta[t])) for t in z]
        docs.append(words)
        mixtures[i] = mix
        lengths[i] = length
    theta = lengths @ mixtures / lengths.sum()
    return docs, beta, theta
