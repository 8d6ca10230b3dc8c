from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vistopics.store import CorpusStore


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if "test_acceptance" in report.nodeid and report.when == "call":
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[ACCEPTANCE {status}] {name}", flush=True)


@pytest.fixture
def run_store(tmp_path) -> CorpusStore:
    store = CorpusStore(tmp_path / "run")
    store.run_dir.mkdir(parents=True)
    return store


@pytest.fixture(scope="session")
def apple_car_docs():
    """Two starkly separable documents over a 4-word vocabulary."""
    vocab = ["apple", "banana", "car", "road"]
    docs = [[0, 0, 0, 1], [2, 2, 2, 3]]
    return docs, vocab


def assert_model_invariants(model, atol=1e-9):
    assert np.all(model.beta >= 0) and np.all(model.gamma >= 0) and np.all(model.theta >= 0)
    np.testing.assert_allclose(model.beta.sum(axis=1), 1.0, atol=atol, rtol=0)
    np.testing.assert_allclose(model.gamma.sum(axis=1), 1.0, atol=atol, rtol=0)
    np.testing.assert_allclose(model.theta.sum(), 1.0, atol=atol, rtol=0)


def block_model(n_topics: int, docs_per_topic: int):
    """Synthetic fitted model where every doc loads 0.9 on its home topic."""
    from vistopics.lda import LdaModel
    from vistopics.preprocess import CleanDoc, Corpus

    n_docs = n_topics * docs_per_topic
    gamma = np.full((n_docs, n_topics), 0.1 / max(n_topics - 1, 1))
    docs = []
    for i in range(n_docs):
        topic = i % n_topics
        gamma[i, topic] = 0.9
        gamma[i] /= gamma[i].sum()
        docs.append(CleanDoc(doc_id=i, frame_path=f"frames/v{topic}/frame_{i + 1}.jpg",
                             cleaned_text=f"doc {i}", tokens=[0]))
    lengths = np.full(n_docs, 5, dtype=np.int64)
    model = LdaModel(k=n_topics, alpha=0.1, eta=0.01,
                     beta=np.full((n_topics, 3), 1 / 3), gamma=gamma,
                     theta=lengths @ gamma / lengths.sum(), doc_lengths=lengths,
                     seed=0, iters=1, burn_in=0, thin=1)
    corpus = Corpus(vocabulary=["one", "two", "three"], docs=docs, dupmap={},
                    dropped_empty=[], dropped_short=[], dropped_non_english=[])
    return model, corpus
