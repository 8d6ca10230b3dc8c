"""Command-line entry point: per-stage subcommands plus a full-run mode.

Stages write their artifacts through the corpus store and append wall-clock
timings to the run manifest. Exit codes: 0 success, 1 runtime failure,
2 usage/configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import captioning, dedup, extract, lda, preprocess, report, validation
from .config import ConfigError, PipelineConfig, load_config
from .service import ValidationService, load_responses, make_server
from .store import (
    CorpusStore,
    StageNotRunError,
    StageTiming,
    StoreError,
    atomic_write_text,
    scan_videos,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class StageFailure(Exception):
    pass


def _dir_bytes(paths) -> int:
    return sum(p.stat().st_size for p in paths if p.is_file())


def _stage_seed(cfg: PipelineConfig, label: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.seed, spawn_key=(label,))


# -- stages -------------------------------------------------------------------

def stage_extract(cfg: PipelineConfig, store: CorpusStore) -> StageTiming:
    input_dir = Path(cfg.input_dir)
    if not cfg.input_dir:
        raise ConfigError("input_dir is not set")
    start = time.monotonic()
    videos = scan_videos(input_dir, lambda p: extract.probe_video(p, cfg.decoder))
    records = extract.extract_all(videos, store, cfg.extraction, cfg.decoder, jobs=cfg.jobs)
    store.write_video_manifest(videos)
    store.write_frame_manifest(records)
    elapsed = time.monotonic() - start
    total_bytes = _dir_bytes(store.run_dir / r.path for r in records)
    return StageTiming(
        total_time_sec=elapsed,
        n_items=len(records),
        avg_time_per_video_sec=elapsed / len(videos) if videos else None,
        avg_time_per_frame_sec=elapsed / len(records) if records else None,
        total_bytes=total_bytes,
        extra={"n_videos": len(videos),
               "n_partial": sum(v.partial for v in videos)},
    )


def stage_dedup(cfg: PipelineConfig, store: CorpusStore) -> StageTiming:
    frames = store.load_frames()
    videos = store.load_videos()
    start = time.monotonic()
    hashed = dedup.hash_frames(frames, store.run_dir, jobs=cfg.jobs)
    kept, dup_rows = dedup.dedup_all(hashed, cfg.dedup)
    store.write_frame_manifest(hashed)
    store.write_duplicate_table(dup_rows)
    elapsed = time.monotonic() - start
    return StageTiming(
        total_time_sec=elapsed,
        n_items=len(kept),
        avg_time_per_video_sec=elapsed / len(videos) if videos else None,
        avg_time_per_frame_sec=elapsed / len(hashed) if hashed else None,
        total_bytes=_dir_bytes(store.run_dir / r.path for r in kept),
        extra={"n_duplicates": len(dup_rows)},
    )


def stage_caption(cfg: PipelineConfig, store: CorpusStore) -> StageTiming:
    store.load_duplicates()  # prerequisite: dedup has run
    frames = store.load_frames()
    csv_path = store.manifest_path("captions")
    rng = np.random.Generator(np.random.PCG64(_stage_seed(cfg, 3)))
    start = time.monotonic()
    stats = captioning.caption_corpus(
        frames, store.run_dir, csv_path, cfg.captioner, rng=rng,
    )
    elapsed = time.monotonic() - start
    n_done = stats.requested + stats.skipped
    return StageTiming(
        total_time_sec=elapsed,
        n_items=n_done,
        avg_time_per_frame_sec=elapsed / stats.requested if stats.requested else None,
        total_bytes=csv_path.stat().st_size,
        extra={"n_ok": stats.ok, "n_failed": stats.failed, "n_skipped": stats.skipped},
    )


def stage_preprocess(cfg: PipelineConfig, store: CorpusStore) -> StageTiming:
    captions = store.load_captions()
    start = time.monotonic()
    pairs = [(c.frame_path, c.caption) for c in captions if c.status == "ok"]
    try:
        corpus = preprocess.build_corpus(pairs, cfg.preprocess)
    except preprocess.EmptyCorpusError as exc:
        raise StageFailure(str(exc))
    path = store.write_json_manifest("corpus", preprocess.corpus_to_json(corpus))
    elapsed = time.monotonic() - start
    return StageTiming(
        total_time_sec=elapsed,
        n_items=corpus.n_docs,
        total_bytes=path.stat().st_size,
        extra={"n_vocab": corpus.n_vocab, "n_duplicate_captions": len(corpus.dupmap),
               "n_dropped_short": len(corpus.dropped_short),
               "n_dropped_empty": len(corpus.dropped_empty)},
    )


def _load_corpus(store: CorpusStore) -> preprocess.Corpus:
    return preprocess.corpus_from_json(store.load_corpus_json())


def stage_sweep(cfg: PipelineConfig, store: CorpusStore) -> StageTiming:
    corpus = _load_corpus(store)
    docs = [d.tokens for d in corpus.docs]
    start = time.monotonic()
    result = lda.cv_sweep(
        docs, corpus.n_vocab,
        k_grid=cfg.lda.k_grid, alpha_multipliers=cfg.lda.alpha_multipliers,
        folds=cfg.lda.folds, eta=cfg.lda.eta, iters=cfg.lda.iters,
        burn_in=cfg.lda.burn_in, thin=cfg.lda.thin, seed=cfg.seed,
        jobs=cfg.jobs, foldin_iters=cfg.lda.foldin_iters,
        foldin_burn=cfg.lda.foldin_burn,
    )
    path = store.write_sweep_table(result.rows)
    store.update_run_manifest("lda_selected", {"k": result.selected_k,
                                               "alpha": result.selected_alpha})
    elapsed = time.monotonic() - start
    print(f"selected K={result.selected_k} alpha={result.selected_alpha:.5g}")
    return StageTiming(
        total_time_sec=elapsed,
        n_items=len(docs),
        total_bytes=path.stat().st_size,
        extra={"selected_k": result.selected_k, "selected_alpha": result.selected_alpha},
    )


def stage_fit(cfg: PipelineConfig, store: CorpusStore) -> StageTiming:
    corpus = _load_corpus(store)
    docs = [d.tokens for d in corpus.docs]
    k, alpha = cfg.lda.k, cfg.lda.alpha
    if k is None:
        selected = store.read_run_manifest().get("lda_selected")
        if not selected:
            raise StageFailure("no topic count configured: set [lda] k or run `vistopics sweep` first")
        k = int(selected["k"])
        alpha = alpha if alpha is not None else float(selected["alpha"])
    if alpha is None:
        alpha = 2.0 / k
    start = time.monotonic()
    model = lda.fit_with_restarts(
        docs, corpus.n_vocab, k=k, alpha=alpha, eta=cfg.lda.eta,
        iters=cfg.lda.iters, burn_in=cfg.lda.burn_in, thin=cfg.lda.thin,
        seed=cfg.seed, n_restarts=cfg.lda.restarts, jobs=cfg.jobs,
    )
    path = atomic_write_text(store.manifest_path("model"), lda.model_json_text(model))
    elapsed = time.monotonic() - start
    return StageTiming(
        total_time_sec=elapsed,
        n_items=model.n_docs,
        total_bytes=path.stat().st_size,
        extra={"k": k, "alpha": alpha},
    )


def stage_report(cfg: PipelineConfig, store: CorpusStore) -> StageTiming:
    corpus = _load_corpus(store)
    model = lda.model_from_json(store.load_model_json())
    captions = store.load_captions()
    store.load_frames()  # prerequisite check; paths inside summaries resolve to frames/
    raw_captions = {c.frame_path: c.caption for c in captions if c.status == "ok"}
    start = time.monotonic()
    extended = report.reintroduce_duplicates(model, corpus)
    summaries = report.topic_table(model, corpus, corpus.vocabulary,
                                   raw_captions=raw_captions, extended=extended)
    out = store.reports_dir
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "topics.json", report.summaries_to_json(summaries))
    atomic_write_text(out / "topics.html", report.gallery_html(summaries))
    manifest = store.read_run_manifest()
    atomic_write_text(out / "metrics.txt", report.metrics_text(manifest))
    atomic_write_text(out / "metrics.json", report.metrics_json(manifest))
    elapsed = time.monotonic() - start
    return StageTiming(
        total_time_sec=elapsed,
        n_items=model.k,
        total_bytes=_dir_bytes(out.iterdir()),
    )


STAGES = {
    "extract": stage_extract,
    "dedup": stage_dedup,
    "caption": stage_caption,
    "preprocess": stage_preprocess,
    "sweep": stage_sweep,
    "fit": stage_fit,
}


def run_stage(name: str, cfg: PipelineConfig, store: CorpusStore) -> None:
    runner = STAGES[name] if name in STAGES else stage_report
    timing = runner(cfg, store)
    if name != "report":
        store.record_stage(name, timing)
    log.info("stage %s done: %d items in %.2fs", name, timing.n_items, timing.total_time_sec)


# -- validation commands --------------------------------------------------------

def cmd_validate_gen(cfg: PipelineConfig, store: CorpusStore) -> None:
    corpus = _load_corpus(store)
    model = lda.model_from_json(store.load_model_json())
    seed_intrusion = int(_stage_seed(cfg, 10).generate_state(1)[0])
    seed_matching = int(_stage_seed(cfg, 11).generate_state(1)[0])
    items = validation.generate_items(
        model, corpus, validation.INTRUSION, n_items=cfg.validation.n_items,
        seed=seed_intrusion, pool_depth=cfg.validation.pool_depth,
    )
    matching = validation.generate_items(
        model, corpus, validation.MATCHING, n_items=cfg.validation.n_items,
        seed=seed_matching, pool_depth=cfg.validation.pool_depth,
    )
    for it in matching:
        it.item_id += len(items)
    items.extend(matching)
    store.validation_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(store.validation_dir / "validation_items.json",
                      validation.items_to_json(items, cfg.seed))
    print(f"generated {len(items)} items -> {store.validation_dir / 'validation_items.json'}")


def _load_items(store: CorpusStore) -> list[validation.ValidationItem]:
    path = store.validation_dir / "validation_items.json"
    if not path.exists():
        raise StageNotRunError("validation items", "validate gen")
    return validation.items_from_json(json.loads(path.read_text(encoding="utf-8")))


def cmd_validate_serve(cfg: PipelineConfig, store: CorpusStore) -> None:
    items = _load_items(store)
    host, _, port = cfg.service.bind.partition(":")
    service = ValidationService(
        items, store.run_dir, store.validation_dir / "responses.jsonl",
        ui_dir=Path(cfg.service.ui_dir) if cfg.service.ui_dir else None,
    )
    server = make_server(service, host or "127.0.0.1", int(port or 0))
    print(f"serving validation tasks on http://{server.server_address[0]}:{server.server_address[1]}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


def cmd_validate_score(cfg: PipelineConfig, store: CorpusStore) -> None:
    items = _load_items(store)
    responses_path = store.validation_dir / "responses.jsonl"
    if not responses_path.exists():
        raise StageNotRunError("responses", "validate serve")
    responses = load_responses(responses_path)
    rep = validation.score(responses, items)
    atomic_write_text(store.validation_dir / "scores.json", rep.to_json())
    for coder, kinds in sorted(rep.per_coder.items()):
        for kind, stats in sorted(kinds.items()):
            acc = stats["accuracy"]
            print(f"{coder} {kind}: {stats['n_correct']}/{stats['n']} "
                  f"({'--' if acc is None else f'{acc:.3f}'})")
    for pair in rep.agreement:
        kappa = "--" if pair.kappa is None else f"{pair.kappa:.3f}"
        print(f"{pair.coders[0]} vs {pair.coders[1]} {pair.kind}: "
              f"agreement {pair.percent_agreement:.3f}, kappa {kappa}")


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vistopics",
        description="Semantic visual topics from a directory of videos.",
    )
    parser.add_argument("--config", type=Path, help="TOML config file")
    parser.add_argument("--run-dir", type=Path, help="override the run directory")
    parser.add_argument("--input-dir", type=Path, help="override the input video directory")
    parser.add_argument("--jobs", type=int, help="worker pool width")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("extract", "dedup", "caption", "preprocess", "sweep", "fit", "report", "run-all", "metrics"):
        sub.add_parser(name)
    val = sub.add_parser("validate")
    val_sub = val.add_subparsers(dest="validate_command", required=True)
    val_sub.add_parser("gen")
    serve = val_sub.add_parser("serve")
    serve.add_argument("--bind", help="host:port (default from config)")
    serve.add_argument("--ui-dir", type=Path, help="coder UI bundle directory")
    val_sub.add_parser("score")
    return parser


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.run_dir:
        cfg.run_dir = str(args.run_dir)
    if args.input_dir:
        cfg.input_dir = str(args.input_dir)
    if args.jobs:
        cfg.jobs = args.jobs
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "bind", None):
        cfg.service.bind = args.bind
    if getattr(args, "ui_dir", None):
        cfg.service.ui_dir = str(args.ui_dir)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _resolve_config(args)
        store = CorpusStore(Path(cfg.run_dir))
        command = args.command
        if command == "metrics":
            if not store.run_json_path.exists():
                print("no run manifest found; run a stage first", file=sys.stderr)
                return EXIT_USAGE
            manifest = store.read_run_manifest()
            if not manifest.get("stages"):
                print("run manifest has no completed stages", file=sys.stderr)
                return EXIT_USAGE
            print(report.metrics_text(manifest), end="")
            return EXIT_OK
        store.run_dir.mkdir(parents=True, exist_ok=True)
        store.record_config(cfg.snapshot(), cfg.seed)
        if command == "validate":
            {
                "gen": cmd_validate_gen,
                "serve": cmd_validate_serve,
                "score": cmd_validate_score,
            }[args.validate_command](cfg, store)
            return EXIT_OK
        if command == "run-all":
            stages = ["extract", "dedup", "caption", "preprocess"]
            if cfg.lda.k is None:
                stages.append("sweep")
            stages += ["fit", "report"]
            for name in stages:
                run_stage(name, cfg, store)
            return EXIT_OK
        run_stage(command, cfg, store)
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageNotRunError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (StoreError, StageFailure, extract.ProbeError,
            validation.GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
