"""Acceptance suite: one test per release criterion, each printing a
visible PASS/FAIL line (see conftest). Tolerances and budgets are fixed
here, not calibrated after the fact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from conftest import assert_model_invariants
from mockserver import MockCaptionServer
from reference import kernel_gibbs_trajectory, naive_gibbs_trajectory
from vistopics.captioning import CaptionerConfig, RemoteCaptioner, caption_corpus
from vistopics.cli import main
from vistopics.dedup import (
    DedupConfig,
    dedup_all,
    hash_frames,
    hex_to_hash,
    similarity,
)
from vistopics.extract import ExtractionConfig, compute_stride, extract_all, probe_video
from vistopics.lda import cv_sweep, fit_lda, fit_with_restarts
from vistopics.store import CorpusStore, FrameRecord
from vistopics.synth import (
    hash_codes_with_separation,
    image_with_hash,
    invert_image,
    planted_corpus,
    write_test_video,
)
from vistopics.validation import INTRUSION, MATCHING, CoderResponse, ValidationItem, score


def test_frame_count_law(tmp_path):
    """10 synthetic videos (3-30 s, fps in {24, 25, 30}): extracted counts
    equal floor((total_frames - 1) / stride) + 1 exactly; under 60 s."""
    start = time.monotonic()
    fps_cycle = [24.0, 25.0, 30.0]
    durations = [3, 6, 9, 12, 15, 18, 21, 24, 27, 30]
    videos_dir = tmp_path / "videos"
    videos_dir.mkdir()
    specs = []
    for i, dur in enumerate(durations):
        fps = fps_cycle[i % 3]
        n_frames = int(fps * dur)
        write_test_video(videos_dir / f"v{i:02d}.mp4", fps=fps, n_frames=n_frames, seed=i)
        specs.append((f"v{i:02d}", fps, n_frames))

    store = CorpusStore(tmp_path / "run")
    store.run_dir.mkdir()
    entries = [probe_video(videos_dir / f"{vid}.mp4") for vid, _, _ in specs]
    records = extract_all(entries, store, ExtractionConfig(target_fps=1.0))

    by_video = {}
    for rec in records:
        by_video.setdefault(rec.video_id, []).append(rec)
    for (vid, fps, n_frames), entry in zip(specs, entries):
        assert entry.native_fps == fps and entry.total_frames == n_frames
        stride = compute_stride(fps, 1.0)
        expected = (n_frames - 1) // stride + 1
        assert len(by_video[vid]) == expected, (vid, fps, n_frames)
    elapsed = time.monotonic() - start
    assert elapsed < 60, f"frame-count law took {elapsed:.1f}s"


def test_dedup_exact_copies_vs_distortions(tmp_path):
    """40 constructed images (10 originals, each with 2 exact copies and a
    heavy distortion): all 20 copies flagged, all 10 distortions kept;
    precision = recall = 1.0; kept-set pairwise similarity < 0.8."""
    codes = hash_codes_with_separation(10, min_distance=13, max_distance=51, seed=17)
    run_dir = tmp_path / "run"
    frames_dir = run_dir / "frames" / "vid"
    frames_dir.mkdir(parents=True)

    records = []
    expected_duplicates = set()
    seq = 0
    for code in codes:
        original = image_with_hash(code)
        distorted = invert_image(original)
        for role, payload in (("orig", original), ("copy", original),
                              ("copy", original), ("dist", distorted)):
            seq += 1
            rel = f"frames/vid/frame_{seq}.jpg"
            (run_dir / rel).write_bytes(payload)
            records.append(FrameRecord("vid", seq, seq - 1, float(seq - 1), rel))
            if role == "copy":
                expected_duplicates.add(seq)
    assert len(records) == 40 and len(expected_duplicates) == 20

    hashed = hash_frames(records, run_dir)
    kept, dup_rows = dedup_all(hashed, DedupConfig(threshold=0.8))

    flagged = {row[1] for row in dup_rows}
    true_positives = flagged & expected_duplicates
    precision = len(true_positives) / len(flagged)
    recall = len(true_positives) / len(expected_duplicates)
    assert precision == 1.0 and recall == 1.0
    assert len(kept) == 20
    for row in dup_rows:
        assert row[3] == 1.0  # exact copies only
    kept_hashes = [hex_to_hash(f.hash_hex) for f in kept]
    for i in range(len(kept_hashes)):
        for j in range(i + 1, len(kept_hashes)):
            assert similarity(kept_hashes[i], kept_hashes[j]) < 0.8


def test_sampler_oracle_equivalence():
    """Optimized Gibbs matches the naive reference bitwise on 50 random
    micro-corpora (D <= 5, V <= 8) at shared seeds; under 30 s."""
    start = time.monotonic()
    rng = np.random.default_rng(404)
    for trial in range(50):
        n_docs = int(rng.integers(1, 6))
        n_vocab = int(rng.integers(2, 9))
        docs = []
        budget = 30
        for _ in range(n_docs):
            length = int(rng.integers(1, min(8, budget) + 1))
            budget -= length
            docs.append([int(t) for t in rng.integers(0, n_vocab, size=length)])
        k = int(rng.integers(2, 6))
        alpha = float(rng.uniform(0.05, 1.0))
        eta = float(rng.uniform(0.005, 0.5))
        seed = int(rng.integers(0, 2**31))
        naive = naive_gibbs_trajectory(docs, n_vocab, k, alpha, eta, 6, seed)
        fast = kernel_gibbs_trajectory(docs, n_vocab, k, alpha, eta, 6, seed)
        for (ndk_a, nkw_a, nk_a), (ndk_b, nkw_b, nk_b) in zip(naive, fast):
            assert np.array_equal(np.array(ndk_a), ndk_b), f"trial {trial}"
            assert np.array_equal(np.array(nkw_a), nkw_b), f"trial {trial}"
            assert np.array_equal(np.array(nk_a), nk_b), f"trial {trial}"
    elapsed = time.monotonic() - start
    assert elapsed < 30, f"oracle equivalence took {elapsed:.1f}s"


def best_permutation_cosines(fit_beta: np.ndarray, true_beta: np.ndarray) -> np.ndarray:
    a = fit_beta / np.linalg.norm(fit_beta, axis=1, keepdims=True)
    b = true_beta / np.linalg.norm(true_beta, axis=1, keepdims=True)
    sim = a @ b.T
    rows, cols = linear_sum_assignment(-sim)
    return sim[rows, cols]


def test_planted_topic_recovery():
    """D=2000, V=500, K=10, alpha=0.1, eta=0.01, mean length 50: fitted
    topics match planted ones with cosine >= 0.9 for >= 9 of 10, on each
    of 3 seeds; under 5 minutes."""
    start = time.monotonic()
    for seed in range(3):
        docs, true_beta, _ = planted_corpus(2000, 500, 10, alpha=0.1,
                                            mean_doc_len=50, seed=seed)
        model = fit_with_restarts(docs, 500, k=10, alpha=0.1, eta=0.01,
                                  iters=300, burn_in=150, thin=15,
                                  seed=seed, n_restarts=8, jobs=2)
        assert_model_invariants(model, atol=1e-9)
        cosines = best_permutation_cosines(model.beta, true_beta)
        assert (cosines >= 0.9).sum() >= 9, f"seed {seed}: {np.sort(cosines)}"
    elapsed = time.monotonic() - start
    assert elapsed < 300, f"recovery took {elapsed:.1f}s"


def test_sweep_selects_planted_topic_count():
    """cv_sweep over K in {5,10,15,20}, multipliers {25,10,5,2,1}, 5 folds,
    on the 10-topic generator: K* in {10, 15} on >= 2 of 3 seeds; under
    15 minutes."""
    start = time.monotonic()
    hits = 0
    selections = []
    for seed in range(3):
        docs, _, _ = planted_corpus(2000, 500, 10, alpha=0.1, mean_doc_len=50, seed=seed)
        result = cv_sweep(docs, 500, k_grid=[5, 10, 15, 20],
                          alpha_multipliers=[25.0, 10.0, 5.0, 2.0, 1.0],
                          folds=5, iters=120, burn_in=60, thin=6, seed=seed,
                          jobs=2, foldin_iters=60, foldin_burn=30)
        selections.append((result.selected_k, result.selected_alpha))
        hits += result.selected_k in (10, 15)
    assert hits >= 2, f"selections: {selections}"
    elapsed = time.monotonic() - start
    assert elapsed < 900, f"sweep took {elapsed:.1f}s"


def test_simplex_and_count_conservation():
    """Simplex sums within 1e-9 after a fit, and token counts conserved at
    every sweep of the sampler."""
    docs, _, _ = planted_corpus(120, 60, 5, alpha=0.2, mean_doc_len=20, seed=31)
    model = fit_lda(docs, 60, k=5, alpha=0.2, eta=0.01,
                    iters=100, burn_in=50, thin=5, seed=31)
    assert_model_invariants(model, atol=1e-9)
    lengths = [len(d) for d in docs]
    for n_dk, n_kw, n_k in kernel_gibbs_trajectory(docs, 60, 5, 0.2, 0.01, 12, seed=31):
        assert n_dk.sum(axis=1).tolist() == lengths
        assert np.array_equal(n_kw.sum(axis=1), n_k)
        assert (n_dk >= 0).all() and (n_kw >= 0).all() and (n_k >= 0).all()


def test_end_to_end_stub_run(tmp_path):
    """`run-all` on 5 synthetic videos with the stub captioner completes
    every stage and emits topics.json, topics.html, and a metrics table
    with 5 stage rows; under 3 minutes."""
    start = time.monotonic()
    videos_dir = tmp_path / "videos"
    videos_dir.mkdir()
    fps_cycle = [24.0, 25.0, 30.0, 24.0, 25.0]
    for i in range(5):
        fps = fps_cycle[i]
        write_test_video(videos_dir / f"news_{chr(97 + i)}.mp4", fps=fps,
                         n_frames=int(fps * (3 + i)), seed=50 + i,
                         repeat_scene_of={2: 0})
    run_dir = tmp_path / "run"
    config = tmp_path / "run.toml"
    config.write_text(f"""
input_dir = "{videos_dir}"
run_dir = "{run_dir}"
seed = 11

[captioner]
kind = "stub"

[preprocess]
min_df = 1
max_df_ratio = 1.0

[lda]
k = 2
iters = 80
burn_in = 40
thin = 4
""")
    assert main(["--config", str(config), "run-all"]) == 0

    topics = json.loads((run_dir / "reports" / "topics.json").read_text())
    assert len(topics) == 2
    assert all("terms" in t and "frames" in t and "prevalence" in t for t in topics)
    html = (run_dir / "reports" / "topics.html").read_text()
    assert "<html>" in html and "Topic 0" in html

    metrics = (run_dir / "reports" / "metrics.txt").read_text()
    stage_rows = [line for line in metrics.splitlines()[2:] if line.strip()]
    assert len(stage_rows) == 5, metrics
    manifest = json.loads((run_dir / "run.json").read_text())
    assert set(manifest["stages"]) == {"extract", "dedup", "caption", "preprocess", "fit"}
    elapsed = time.monotonic() - start
    assert elapsed < 180, f"end-to-end run took {elapsed:.1f}s"


def test_validation_statistics():
    """10,000 uniform-random responses score within 0.02 of chance (1/6
    intrusion, 1/4 matching); key-replay responses score exactly 1.0."""
    rng = np.random.default_rng(2025)
    n = 10_000
    for kind, n_choices, chance in ((INTRUSION, 6, 1 / 6), (MATCHING, 4, 1 / 4)):
        items = [
            ValidationItem(item_id=i + 1, kind=kind,
                           images=[f"f{i}_{j}.jpg" for j in range(6)],
                           rows=None if kind == INTRUSION else
                           [[f"r{i}{r}{c}" for c in range(4)] for r in range(4)],
                           key=int(k), source_topics=[0, 1])
            for i, k in enumerate(rng.integers(0, n_choices, size=n))
        ]
        random_responses = [
            CoderResponse("random", it.item_id, int(c), "t")
            for it, c in zip(items, rng.integers(0, n_choices, size=n))
        ]
        replay_responses = [CoderResponse("replay", it.item_id, it.key, "t")
                            for it in items]
        report = score(random_responses + replay_responses, items)
        accuracy = report.per_coder["random"][kind]["accuracy"]
        assert abs(accuracy - chance) < 0.02, (kind, accuracy)
        assert report.per_coder["replay"][kind]["accuracy"] == 1.0


def test_captioner_protocol_suite(tmp_path):
    """Five scenarios against a local chat-completions mock: correct CSV
    content, idempotent resume, and per-frame failure isolation."""
    def setup(name: str, contents: list[bytes]):
        root = tmp_path / name
        (root / "frames" / "v").mkdir(parents=True)
        frames = []
        for i, data in enumerate(contents, start=1):
            rel = f"frames/v/frame_{i}.jpg"
            (root / rel).write_bytes(data)
            frames.append(FrameRecord("v", i, i - 1, float(i - 1), rel, ""))
        return root, frames, root / "captions.csv"

    def digest(data: bytes) -> str:
        return hashlib.sha256(data).hexdigest()[:8]

    def rows_of(path: Path):
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))

    def cfg_for(server) -> CaptionerConfig:
        return CaptionerConfig(kind="remote", endpoint_url=server.url,
                               delay_min_sec=0.0, delay_max_sec=0.0,
                               max_retries=3, timeout_sec=5.0,
                               backoff_base_sec=0.01)

    # 1. happy path: content and order match the manifest
    contents = [b"alpha", b"beta", b"gamma", b"delta"]
    root, frames, csv_path = setup("happy", contents)
    with MockCaptionServer() as server:
        cfg = cfg_for(server)
        stats = caption_corpus(frames, root, csv_path, cfg, captioner=RemoteCaptioner(cfg))
    assert stats.ok == 4
    rows = rows_of(csv_path)
    assert [r["frame_path"] for r in rows] == [f.path for f in frames]
    assert [r["caption"] for r in rows] == [f"mock caption {digest(c)}" for c in contents]

    # 2. resume: 2 of 5 done, rerun issues exactly 3 requests
    contents = [b"one", b"two", b"three", b"four", b"five"]
    root, frames, csv_path = setup("resume", contents)
    with MockCaptionServer() as server:
        cfg = cfg_for(server)
        caption_corpus(frames[:2], root, csv_path, cfg, captioner=RemoteCaptioner(cfg))
        assert len(server.requests) == 2
        stats = caption_corpus(frames, root, csv_path, cfg, captioner=RemoteCaptioner(cfg))
        assert len(server.requests) == 5 and stats.requested == 3

    # 3. idempotence: complete run, second run issues zero requests
    with MockCaptionServer() as server:
        cfg = cfg_for(server)
        again = caption_corpus(frames, root, csv_path, cfg, captioner=RemoteCaptioner(cfg))
        assert len(server.requests) == 0 and again.skipped == 5

    # 4. one frame permanently failing: 4 ok + 1 failed, run completes
    contents = [b"okA", b"okB", b"poison", b"okC", b"okD"]
    root, frames, csv_path = setup("poison", contents)
    with MockCaptionServer({digest(b"poison"): ("fail", 500)}) as server:
        cfg = cfg_for(server)
        stats = caption_corpus(frames, root, csv_path, cfg, captioner=RemoteCaptioner(cfg))
    assert stats.ok == 4 and stats.failed == 1
    rows = rows_of(csv_path)
    assert len(rows) == 5
    assert [r["status"] for r in rows] == ["ok", "ok", "failed", "ok", "ok"]

    # 5. transient faults recover: 429 storm and malformed bodies both retry
    contents = [b"limited", b"mangled", b"plain"]
    root, frames, csv_path = setup("transient", contents)
    behaviors = {digest(b"limited"): ("flaky", 429, 2),
                 digest(b"mangled"): ("malformed_then_ok", 1)}
    with MockCaptionServer(behaviors) as server:
        cfg = cfg_for(server)
        stats = caption_corpus(frames, root, csv_path, cfg, captioner=RemoteCaptioner(cfg))
    assert stats.ok == 3 and stats.failed == 0
    rows = rows_of(csv_path)
    attempts = {r["frame_path"].rsplit("_", 1)[-1]: int(r["attempts"]) for r in rows}
    assert attempts == {"1.jpg": 3, "2.jpg": 2, "3.jpg": 1}
