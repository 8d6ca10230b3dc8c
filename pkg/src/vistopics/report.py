"""Post-modeling reports: duplicate reintroduction, topic tables, gallery
page, and the pipeline metrics table.
"""

from __future__ import annotations

import html
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .lda import LdaModel, top_terms
from .preprocess import Corpus

log = logging.getLogger(__name__)


@dataclass
class ExtendedGamma:
    """Document-topic rows after duplicate captions rejoin the corpus."""

    gamma: np.ndarray  # (D + n_dups, K)
    doc_lengths: np.ndarray
    frame_paths: list[str]
    theta: np.ndarray  # recomputed token-weighted prevalence


@dataclass
class TopicSummary:
    topic: int
    prevalence: float
    terms: list[tuple[str, float]]
    captions: list[str]
    frames: list[str]
    warnings: list[str] = field(default_factory=list)


def reintroduce_duplicates(model: LdaModel, corpus: Corpus) -> ExtendedGamma:
    """Give each removed duplicate caption a copy of its original's gamma row
    and recompute prevalence over the extended, token-weighted document set."""
    n_docs = model.n_docs
    rows = [model.gamma]
    lengths = [model.doc_lengths]
    paths = [d.frame_path for d in corpus.docs]
    for frame_path, original_id in sorted(corpus.dupmap.items()):
        if not 0 <= original_id < n_docs:
            raise ValueError(
                f"duplicate map entry {frame_path!r} points at unknown document {original_id}"
            )
        rows.append(model.gamma[original_id][None, :])
        lengths.append(model.doc_lengths[original_id][None])
        paths.append(frame_path)
    gamma = np.concatenate(rows, axis=0)
    doc_lengths = np.concatenate(lengths)
    theta = doc_lengths @ gamma / doc_lengths.sum()
    return ExtendedGamma(gamma=gamma, doc_lengths=doc_lengths,
                         frame_paths=paths, theta=theta)


def topic_table(
    model: LdaModel,
    corpus: Corpus,
    vocabulary: list[str],
    n_terms: int = 10,
    n_reps: int = 5,
    raw_captions: dict[str, str] | None = None,
    extended: ExtendedGamma | None = None,
) -> list[TopicSummary]:
    """One summary per topic: top terms plus the highest-gamma documents whose
    dominant topic is that topic (ties to the lower doc id)."""
    extended = extended or reintroduce_duplicates(model, corpus)
    raw_captions = raw_captions or {}
    cleaned_by_path = {d.frame_path: d.cleaned_text for d in corpus.docs}
    for frame_path, original_id in corpus.dupmap.items():
        cleaned_by_path[frame_path] = corpus.docs[original_id].cleaned_text

    dominant = np.argmax(extended.gamma, axis=1)
    summaries: list[TopicSummary] = []
    for t in range(model.k):
        member_ids = np.flatnonzero(dominant == t)
        ranked = sorted(member_ids, key=lambda i: (-extended.gamma[i, t], i))[:n_reps]
        warnings: list[str] = []
        if not len(member_ids):
            warnings.append("no documents have this topic dominant")
            log.warning("topic %d has no dominant documents", t)
        frames = [extended.frame_paths[i] for i in ranked]
        captions = [
            raw_captions.get(p, cleaned_by_path.get(p, "")) for p in frames
        ]
        summaries.append(TopicSummary(
            topic=t,
            prevalence=float(extended.theta[t]),
            terms=top_terms(model, vocabulary, t, n_terms),
            captions=captions,
            frames=frames,
            warnings=warnings,
        ))
    return summaries


def summaries_to_json(summaries: list[TopicSummary]) -> str:
    return json.dumps([
        {
            "topic": s.topic,
            "prevalence": s.prevalence,
            "terms": [{"token": tok, "probability": p} for tok, p in s.terms],
            "captions": s.captions,
            "frames": s.frames,
            "warnings": s.warnings,
        }
        for s in summaries
    ], indent=1)


_GALLERY_STYLE = """
body { font-family: sans-serif; margin: 2em; background: #fafafa; color: #222; }
section { margin-bottom: 2.5em; border-bottom: 1px solid #ddd; padding-bottom: 1em; }
.thumbs img { height: 120px; margin: 4px; border: 1px solid #bbb; }
.terms { color: #444; }
caption, .cap { font-size: 0.9em; color: #555; }
"""


def gallery_html(summaries: list[TopicSummary], title: str = "Visual topics") -> str:
    """Static per-topic gallery with thumbnails of the top frames."""
    parts = [
        "<!doctype html>",
        f"<html><head><meta charset='utf-8'><title>{html.escape(title)}</title>",
        f"<style>{_GALLERY_STYLE}</style></head><body>",
        f"<h1>{html.escape(title)}</h1>",
    ]
    for s in summaries:
        terms = ", ".join(tok for tok, _ in s.terms)
        parts.append(f"<section><h2>Topic {s.topic}</h2>")
        parts.append(f"<p class='terms'>prevalence {s.prevalence:.4f} &middot; {html.escape(terms)}</p>")
        parts.append("<div class='thumbs'>")
        for frame, cap in zip(s.frames, s.captions):
            esc = html.escape(frame)
            parts.append(f"<img src='../{esc}' alt='{html.escape(cap)}' loading='lazy'>")
        parts.append("</div>")
        for cap in s.captions:
            parts.append(f"<p class='cap'>{html.escape(cap)}</p>")
        if s.warnings:
            parts.append(f"<p class='cap'><em>{html.escape('; '.join(s.warnings))}</em></p>")
        parts.append("</section>")
    parts.append("</body></html>")
    return "\n".join(parts)


# -- pipeline metrics ---------------------------------------------------------

STAGE_LABELS = {
    "extract": ("Frame Extraction", "Frames"),
    "dedup": ("Frame Reduction (Deduplication)", "Frames"),
    "caption": ("Image Captioning", "Frames"),
    "preprocess": ("Caption Preprocessing", "Captions"),
    "sweep": ("LDA Sweep", "Documents"),
    "fit": ("LDA Analysis", "Documents"),
}

METRICS_COLUMNS = ["Stage", "Total Time", "N", "Avg Time/Video (s)",
                   "Avg Time/Frame (s)", "Total Size"]


def format_hms(seconds: float) -> str:
    total = int(round(seconds))
    return f"{total // 3600:02d}:{total % 3600 // 60:02d}:{total % 60:02d}"


def format_size(n_bytes: int | None) -> str:
    if not n_bytes:
        return "--"
    value = float(n_bytes)
    for unit in ("B", "KB", "MB", "GB", "TB"):
        if value < 1000 or unit == "TB":
            return f"{value:.1f} {unit}" if unit != "B" else f"{int(value)} B"
        value /= 1000


def metrics_rows(run_manifest: dict) -> list[list[str]]:
    rows = []
    stages = run_manifest.get("stages", {})
    for key, (label, unit) in STAGE_LABELS.items():
        entry = stages.get(key)
        if entry is None:
            continue
        per_video = entry.get("avg_time_per_video_sec")
        per_frame = entry.get("avg_time_per_frame_sec")
        rows.append([
            label,
            format_hms(entry["total_time_sec"]),
            f"{entry['n_items']:,} {unit}",
            "--" if per_video is None else f"{per_video:.2f}",
            "--" if per_frame is None else f"{per_frame:.3f}",
            format_size(entry.get("total_bytes")),
        ])
    return rows


def metrics_text(run_manifest: dict) -> str:
    rows = metrics_rows(run_manifest)
    table = [METRICS_COLUMNS] + rows
    widths = [max(len(r[i]) for r in table) for i in range(len(METRICS_COLUMNS))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def metrics_json(run_manifest: dict) -> str:
    stages = run_manifest.get("stages", {})
    out = []
    for key, (label, _unit) in STAGE_LABELS.items():
        entry = stages.get(key)
        if entry is None:
            continue
        out.append({
            "stage": label,
            "total_time_sec": entry["total_time_sec"],
            "n_items": entry["n_items"],
            "avg_time_per_video_sec": entry.get("avg_time_per_video_sec"),
            "avg_time_per_frame_sec": entry.get("avg_time_per_frame_sec"),
            "total_bytes": entry.get("total_bytes"),
        })
    return json.dumps(out, indent=1)
