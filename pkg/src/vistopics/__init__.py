"""Semantic visual topic discovery for video corpora.

Pipeline: frame extraction -> perceptual-hash dedup -> captioning ->
text preprocessing -> LDA (collapsed Gibbs) -> topic reports, plus a
human-validation subsystem with a coder-facing web service.
"""

__version__ = "0.1.0"
