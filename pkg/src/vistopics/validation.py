"""Human-validation task generation and scoring.

Two task kinds, mirroring intrusion-style topic evaluation:

* image_intrusion — six frames, five from one topic and one intruder from
  another; the coder picks the odd one out.
* topic_matching — four rows of four frames, one topic per row, plus a
  probe frame drawn from one of the four topics; the coder picks its row.

Items carry their answer key only in the server-side artifact; payloads
sent to coders never include it. Scoring reports per-coder accuracy,
pairwise percent agreement, and Cohen's kappa per task.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .lda import LdaModel
from .preprocess import Corpus

log = logging.getLogger(__name__)

INTRUSION = "image_intrusion"
MATCHING = "topic_matching"
KINDS = (INTRUSION, MATCHING)

N_INTRUSION_CHOICES = 6
N_MATCHING_ROWS = 4


@dataclass
class ValidationItem:
    item_id: int
    kind: str
    images: list[str]  # intrusion: the 6 frames; matching: [probe]
    rows: list[list[str]] | None  # matching only: 4 rows of 4 frames
    key: int  # intruder position (0-5) or correct row (0-3)
    source_topics: list[int]

    def public_payload(self) -> dict:
        """What a coder is allowed to see; never includes the key."""
        payload = {"item_id": self.item_id, "kind": self.kind,
                   "images": list(self.images)}
        if self.rows is not None:
            payload["rows"] = [list(r) for r in self.rows]
        return payload


@dataclass
class CoderResponse:
    coder_id: str
    item_id: int
    choice: int
    received_at: str


class GenerationError(Exception):
    """Not enough eligible topics/documents; message carries the counts."""


def topic_pools(model: LdaModel, corpus: Corpus, depth: int = 10) -> dict[int, list[str]]:
    """Frames strongly associated with each topic: the top-`depth` documents
    by gamma whose dominant topic is that topic."""
    dominant = np.argmax(model.gamma, axis=1)
    pools: dict[int, list[str]] = {}
    for t in range(model.k):
        members = np.flatnonzero(dominant == t)
        ranked = sorted(members, key=lambda i: (-model.gamma[i, t], i))[:depth]
        pools[t] = [corpus.docs[i].frame_path for i in ranked]
    return pools


def generate_items(
    model: LdaModel,
    corpus: Corpus,
    kind: str,
    n_items: int = 105,
    seed: int = 0,
    pool_depth: int = 10,
) -> list[ValidationItem]:
    """Seeded item set with hidden keys; identical seed, identical items."""
    if kind not in KINDS:
        raise ValueError(f"unknown task kind: {kind}")
    pools = topic_pools(model, corpus, depth=pool_depth)
    eligible = sorted(t for t, pool in pools.items() if len(pool) >= 5)
    nonempty = sorted(t for t, pool in pools.items() if pool)
    counts = {t: len(pool) for t, pool in pools.items()}
    if kind == INTRUSION and (len(eligible) < 5 or len(nonempty) < 2):
        raise GenerationError(
            f"image intrusion needs >= 5 topics with >= 5 pooled documents; "
            f"pool sizes: {counts}"
        )
    if kind == MATCHING and len(eligible) < 4:
        raise GenerationError(
            f"topic matching needs >= 4 topics with >= 5 pooled documents; "
            f"pool sizes: {counts}"
        )

    rng = np.random.default_rng(seed)
    items: list[ValidationItem] = []
    for item_id in range(1, n_items + 1):
        if kind == INTRUSION:
            topic = int(rng.choice(eligible))
            others = [t for t in nonempty if t != topic]
            intruder_topic = int(rng.choice(others))
            member_idx = rng.choice(len(pools[topic]), size=5, replace=False)
            members = [pools[topic][i] for i in member_idx]
            intruder = pools[intruder_topic][int(rng.integers(len(pools[intruder_topic])))]
            images = members + [intruder]
            order = rng.permutation(N_INTRUSION_CHOICES)
            shuffled = [images[i] for i in order]
            key = int(np.flatnonzero(order == 5)[0])
            items.append(ValidationItem(
                item_id=item_id, kind=kind, images=shuffled, rows=None,
                key=key, source_topics=[topic, intruder_topic],
            ))
        else:
            topic_idx = rng.choice(len(eligible), size=N_MATCHING_ROWS, replace=False)
            topics = [eligible[i] for i in topic_idx]
            probe_row = int(rng.integers(N_MATCHING_ROWS))
            rows: list[list[str]] = []
            probe = ""
            for r, t in enumerate(topics):
                pool = pools[t]
                if r == probe_row:
                    chosen = rng.choice(len(pool), size=5, replace=False)
                    rows.append([pool[i] for i in chosen[:4]])
                    probe = pool[chosen[4]]
                else:
                    chosen = rng.choice(len(pool), size=4, replace=False)
                    rows.append([pool[i] for i in chosen])
            items.append(ValidationItem(
                item_id=item_id, kind=kind, images=[probe], rows=rows,
                key=probe_row, source_topics=topics,
            ))
    return items


def choice_range(kind: str) -> int:
    return N_INTRUSION_CHOICES if kind == INTRUSION else N_MATCHING_ROWS


def items_to_json(items: list[ValidationItem], seed: int) -> str:
    return json.dumps({
        "schema_version": 1,
        "seed": seed,
        "items": [
            {"item_id": it.item_id, "kind": it.kind, "images": it.images,
             "rows": it.rows, "key": it.key, "source_topics": it.source_topics}
            for it in items
        ],
    }, indent=1)


def items_from_json(doc: dict) -> list[ValidationItem]:
    return [
        ValidationItem(
            item_id=d["item_id"], kind=d["kind"], images=list(d["images"]),
            rows=None if d["rows"] is None else [list(r) for r in d["rows"]],
            key=int(d["key"]), source_topics=list(d["source_topics"]),
        )
        for d in doc["items"]
    ]


# -- scoring -------------------------------------------------------------

@dataclass
class PairAgreement:
    coders: tuple[str, str]
    kind: str
    n_common: int
    percent_agreement: float
    kappa: float | None
    kappa_degenerate: bool = False


@dataclass
class ScoreReport:
    per_coder: dict[str, dict[str, dict]]  # coder -> kind -> {n, n_correct, accuracy}
    agreement: list[PairAgreement]
    excluded: dict[str, list[str]] = field(default_factory=dict)  # kind -> coders without responses

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": 1,
            "per_coder": self.per_coder,
            "agreement": [
                {"coders": list(p.coders), "kind": p.kind, "n_common": p.n_common,
                 "percent_agreement": p.percent_agreement, "kappa": p.kappa,
                 "kappa_degenerate": p.kappa_degenerate}
                for p in self.agreement
            ],
            "excluded": self.excluded,
        }, indent=1)


def cohen_kappa(choices_a: list[int], choices_b: list[int], n_categories: int) -> tuple[float | None, bool]:
    """Chance-corrected agreement for two raters over categorical choices.

    Returns (kappa, degenerate). With fully identical one-category choices
    the standard statistic is 0/0; that is reported as 1.0 when observed
    agreement is perfect, else as undefined (None) with the flag set.
    """
    n = len(choices_a)
    if n == 0:
        return None, True
    a = np.asarray(choices_a)
    b = np.asarray(choices_b)
    p_o = float(np.mean(a == b))
    pa = np.bincount(a, minlength=n_categories) / n
    pb = np.bincount(b, minlength=n_categories) / n
    p_e = float(pa @ pb)
    if 1.0 - p_e < 1e-12:
        return (1.0, True) if p_o > 1.0 - 1e-12 else (None, True)
    return (p_o - p_e) / (1.0 - p_e), False


def score(responses: list[CoderResponse], items: list[ValidationItem]) -> ScoreReport:
    """Accuracy per coder per task, plus pairwise agreement and kappa.

    Scoring is independent of item order and symmetric in coder order.
    """
    by_id = {it.item_id: it for it in items}
    for r in responses:
        if r.item_id not in by_id:
            raise ValueError(f"response references unknown item {r.item_id}")

    kinds = sorted({it.kind for it in items})
    coders = sorted({r.coder_id for r in responses})
    # (coder, kind) -> {item_id: choice}
    table: dict[tuple[str, str], dict[int, int]] = {}
    for r in responses:
        kind = by_id[r.item_id].kind
        table.setdefault((r.coder_id, kind), {})[r.item_id] = r.choice

    per_coder: dict[str, dict[str, dict]] = {}
    for coder in coders:
        per_coder[coder] = {}
        for kind in kinds:
            answers = table.get((coder, kind), {})
            n = len(answers)
            n_correct = sum(choice == by_id[i].key for i, choice in answers.items())
            per_coder[coder][kind] = {
                "n": n,
                "n_correct": n_correct,
                "accuracy": n_correct / n if n else None,
            }

    agreement: list[PairAgreement] = []
    excluded: dict[str, list[str]] = {}
    for kind in kinds:
        with_responses = [c for c in coders if table.get((c, kind))]
        without = [c for c in coders if c not in with_responses]
        if without:
            excluded[kind] = without
        for i in range(len(with_responses)):
            for j in range(i + 1, len(with_responses)):
                a, b = with_responses[i], with_responses[j]
                common = sorted(set(table[(a, kind)]) & set(table[(b, kind)]))
                if not common:
                    continue
                choices_a = [table[(a, kind)][item] for item in common]
                choices_b = [table[(b, kind)][item] for item in common]
                pct = float(np.mean([x == y for x, y in zip(choices_a, choices_b)]))
                kappa, degenerate = cohen_kappa(choices_a, choices_b, choice_range(kind))
                agreement.append(PairAgreement(
                    coders=(a, b), kind=kind, n_common=len(common),
                    percent_agreement=pct, kappa=kappa, kappa_degenerate=degenerate,
                ))
    return ScoreReport(per_coder=per_coder, agreement=agreement, excluded=excluded)
