"""Caption cleaning, duplicate-caption removal, and corpus construction.

Cleaning lowercases, strips HTML tags, replaces everything outside [a-z ]
with spaces, and collapses whitespace; captions that clean to fewer than
10 characters are dropped. Duplicate cleaned captions are removed before
modeling and remembered for reintroduction afterwards. Tokens shorter
than 3 characters, stopwords, and tokens outside the document-frequency
bounds never reach the vocabulary. No stemming or lemmatization anywhere.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import stopwords

log = logging.getLogger(__name__)

_TAG_RE = re.compile(r"<[^>]*>")
_NON_ALPHA_RE = re.compile(r"[^a-z ]")

# frequent English trigrams for the optional language screen
_ENGLISH_TRIGRAMS = frozenset([
    "the", "and", "ing", "ion", "tio", "ent", "ati", "for", "her", "ter",
    "hat", "tha", "ere", "ate", "his", "con", "res", "ver", "all", "ons",
    "nce", "men", "ith", "ted", "ers", "pro", "thi", "wit", "are", "ess",
    "not", "ive", "was", "ect", "rea", "com", "eve", "per", "int", "est",
    "sta", "cti", "ica", "ist", "ear", "ain", "one", "our", "iti", "rat",
])


@dataclass
class PreprocessConfig:
    min_caption_chars: int = 10  # measured on the cleaned string
    min_token_chars: int = 3
    max_df_ratio: float = 0.5  # tokens in MORE than this fraction of docs are dropped
    min_df: int = 10  # absolute document-frequency floor
    stopword_files: tuple[str, ...] = ()
    drop_non_english: bool = False
    english_trigram_threshold: float = 0.1


@dataclass
class CleanDoc:
    doc_id: int
    frame_path: str
    cleaned_text: str
    tokens: list[int] = field(default_factory=list)


@dataclass
class Corpus:
    vocabulary: list[str]
    docs: list[CleanDoc]  # modeled docs; tokens reference vocabulary ids
    dupmap: dict[str, int]  # dropped frame_path -> retained doc_id
    dropped_empty: list[str]  # frame paths whose docs lost every token
    dropped_short: list[str]
    dropped_non_english: list[str]

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def n_vocab(self) -> int:
        return len(self.vocabulary)


class EmptyCorpusError(Exception):
    """Nothing survived filtering; carries diagnostic counts."""


def clean_caption(raw: str) -> str | None:
    """Normalize one caption, or None when it cleans to under 10 characters."""
    text = raw.lower()
    text = _TAG_RE.sub(" ", text)
    text = _NON_ALPHA_RE.sub(" ", text)
    text = " ".join(text.split())
    return text if len(text) >= 10 else None


def english_likelihood(text: str) -> float:
    """Fraction of character trigrams that are common English trigrams."""
    compact = text.replace(" ", "")
    if len(compact) < 3:
        return 0.0
    trigrams = [compact[i:i + 3] for i in range(len(compact) - 2)]
    hits = sum(t in _ENGLISH_TRIGRAMS for t in trigrams)
    return hits / len(trigrams)


def dedup_captions(docs: list[tuple[str, str]]) -> tuple[list[tuple[str, str]], dict[str, int]]:
    """Keep the first occurrence of each cleaned text, in input order.

    `docs` are (frame_path, cleaned_text) pairs; returns the unique pairs
    and a map from each dropped frame_path to the retained doc index.
    """
    unique: list[tuple[str, str]] = []
    first_seen: dict[str, int] = {}
    dupmap: dict[str, int] = {}
    for frame_path, text in docs:
        if text in first_seen:
            dupmap[frame_path] = first_seen[text]
        else:
            first_seen[text] = len(unique)
            unique.append((frame_path, text))
    return unique, dupmap


def build_corpus(
    captions: list[tuple[str, str]],
    cfg: PreprocessConfig | None = None,
) -> Corpus:
    """Full preprocessing pass over (frame_path, raw caption) pairs.

    Cleans, optionally screens non-English captions, removes duplicate
    captions, tokenizes, applies the length/stopword/document-frequency
    filters, and assigns dense alphabetical token ids.
    """
    cfg = cfg or PreprocessConfig()
    if not captions:
        raise EmptyCorpusError("no captions to preprocess")

    cleaned: list[tuple[str, str]] = []
    dropped_short: list[str] = []
    dropped_non_english: list[str] = []
    for frame_path, raw in captions:
        text = clean_caption(raw)
        if text is None:
            dropped_short.append(frame_path)
            continue
        if cfg.drop_non_english and english_likelihood(text) < cfg.english_trigram_threshold:
            dropped_non_english.append(frame_path)
            continue
        cleaned.append((frame_path, text))

    unique, dupmap = dedup_captions(cleaned)
    if not unique:
        raise EmptyCorpusError(
            f"no captions survived cleaning: {len(dropped_short)} too short, "
            f"{len(dropped_non_english)} non-English, 0 unique"
        )

    stop = stopwords.combined_stopwords([Path(p) for p in cfg.stopword_files])
    candidate_docs: list[list[str]] = []
    for _, text in unique:
        tokens = [t for t in text.split()
                  if len(t) >= cfg.min_token_chars and t not in stop]
        candidate_docs.append(tokens)

    n_docs = len(unique)
    df = Counter()
    for tokens in candidate_docs:
        df.update(set(tokens))
    vocab_tokens = sorted(
        t for t, count in df.items()
        if count >= cfg.min_df and count <= cfg.max_df_ratio * n_docs
    )
    if not vocab_tokens:
        raise EmptyCorpusError(
            f"vocabulary empty after filtering: {n_docs} docs, "
            f"{len(df)} candidate tokens, min_df={cfg.min_df}, "
            f"max_df_ratio={cfg.max_df_ratio}"
        )
    token_ids = {t: i for i, t in enumerate(vocab_tokens)}

    docs: list[CleanDoc] = []
    dropped_empty: list[str] = []
    kept_index: dict[int, int] = {}  # pre-drop unique index -> modeled doc_id
    for idx, ((frame_path, text), tokens) in enumerate(zip(unique, candidate_docs)):
        ids = [token_ids[t] for t in tokens if t in token_ids]
        if not ids:
            dropped_empty.append(frame_path)
            log.info("dropping empty doc after filtering: %s", frame_path)
            continue
        kept_index[idx] = len(docs)
        docs.append(CleanDoc(doc_id=len(docs), frame_path=frame_path,
                             cleaned_text=text, tokens=ids))
    if not docs:
        raise EmptyCorpusError(
            f"every document became empty after filtering: {n_docs} docs, "
            f"V={len(vocab_tokens)}"
        )

    # Re-point duplicates at modeled ids; duplicates of now-empty docs are
    # dropped alongside their originals.
    final_dupmap: dict[str, int] = {}
    for frame_path, idx in dupmap.items():
        if idx in kept_index:
            final_dupmap[frame_path] = kept_index[idx]
        else:
            dropped_empty.append(frame_path)

    return Corpus(
        vocabulary=vocab_tokens,
        docs=docs,
        dupmap=final_dupmap,
        dropped_empty=dropped_empty,
        dropped_short=dropped_short,
        dropped_non_english=dropped_non_english,
    )


def corpus_to_json(corpus: Corpus) -> dict:
    return {
        "vocabulary": corpus.vocabulary,
        "docs": [
            {"doc_id": d.doc_id, "frame_path": d.frame_path,
             "cleaned_text": d.cleaned_text, "tokens": d.tokens}
            for d in corpus.docs
        ],
        "dupmap": corpus.dupmap,
        "dropped_empty": corpus.dropped_empty,
        "dropped_short": corpus.dropped_short,
        "dropped_non_english": corpus.dropped_non_english,
    }


def corpus_from_json(doc: dict) -> Corpus:
    return Corpus(
        vocabulary=list(doc["vocabulary"]),
        docs=[CleanDoc(doc_id=d["doc_id"], frame_path=d["frame_path"],
                       cleaned_text=d["cleaned_text"], tokens=list(d["tokens"]))
              for d in doc["docs"]],
        dupmap={k: int(v) for k, v in doc["dupmap"].items()},
        dropped_empty=list(doc["dropped_empty"]),
        dropped_short=list(doc["dropped_short"]),
        dropped_non_english=list(doc["dropped_non_english"]),
    )
