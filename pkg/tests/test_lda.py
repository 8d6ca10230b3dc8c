from __future__ import annotations

import json
import math

import numpy as np
import pytest

from conftest import assert_model_invariants
from reference import kernel_gibbs_trajectory, naive_gibbs_trajectory
from vistopics.lda import (
    LdaModel,
    cv_sweep,
    dominant_topic,
    fit_lda,
    fit_with_restarts,
    model_from_json,
    model_json_text,
    perplexity,
    top_terms,
)
from vistopics.synth import planted_corpus


def random_micro_corpus(rng: np.random.Generator):
    n_docs = int(rng.integers(1, 6))
    n_vocab = int(rng.integers(2, 9))
    docs = []
    remaining = 30
    for _ in range(n_docs):
        length = int(rng.integers(1, min(8, remaining) + 1))
        remaining -= length
        docs.append([int(t) for t in rng.integers(0, n_vocab, size=length)])
    return docs, n_vocab


class TestOracleEquivalence:
    def test_trajectories_match_bitwise_on_micro_corpora(self):
        rng = np.random.default_rng(2024)
        for trial in range(20):
            docs, n_vocab = random_micro_corpus(rng)
            k = int(rng.integers(2, 5))
            seed = int(rng.integers(0, 2**31))
            naive = naive_gibbs_trajectory(docs, n_vocab, k, 0.1, 0.01, 8, seed)
            fast = kernel_gibbs_trajectory(docs, n_vocab, k, 0.1, 0.01, 8, seed)
            for (ndk_a, nkw_a, nk_a), (ndk_b, nkw_b, nk_b) in zip(naive, fast):
                assert np.array_equal(np.array(ndk_a), ndk_b)
                assert np.array_equal(np.array(nkw_a), nkw_b)
                assert np.array_equal(np.array(nk_a), nk_b)

    def test_count_conservation_every_iteration(self):
        docs = [[0, 1, 2, 0], [2, 2, 1], [3, 0]]
        lengths = [len(doc) for doc in docs]
        for n_dk, n_kw, n_k in kernel_gibbs_trajectory(docs, 4, 3, 0.5, 0.1, 10, seed=3):
            assert n_dk.sum(axis=1).tolist() == lengths
            assert np.array_equal(n_kw.sum(axis=1), n_k)
            assert n_k.sum() == sum(lengths)
            assert (n_dk >= 0).all() and (n_kw >= 0).all()


class TestFit:
    def test_v1_forces_beta(self):
        model = fit_lda([[0, 0, 0]], 1, k=2, alpha=0.1, iters=20, burn_in=10, thin=2, seed=0)
        np.testing.assert_allclose(model.beta, 1.0)
        assert model.gamma[0].sum() == pytest.approx(1.0, abs=1e-12)

    def test_single_doc_theta_equals_gamma(self):
        model = fit_lda([[0, 1, 0, 1]], 2, k=2, alpha=0.1, iters=30, burn_in=10, thin=2, seed=1)
        np.testing.assert_allclose(model.theta, model.gamma[0])

    def test_apple_car_separation_over_seeds(self, apple_car_docs):
        docs, vocab = apple_car_docs
        separated = 0
        for seed in range(20):
            model = fit_lda(docs, len(vocab), k=2, alpha=0.1, eta=0.01,
                            iters=500, burn_in=250, thin=10, seed=seed)
            t0, t1 = dominant_topic(model.gamma[0]), dominant_topic(model.gamma[1])
            if t0 == t1:
                continue
            top0 = top_terms(model, vocab, t0, 1)[0][0]
            top1 = top_terms(model, vocab, t1, 1)[0][0]
            if top0 in ("apple", "banana") and top1 in ("car", "road"):
                separated += 1
        assert separated >= 16  # statistical check, not exact

    def test_seed_determinism_bitwise(self, apple_car_docs):
        docs, vocab = apple_car_docs
        a = fit_lda(docs, len(vocab), k=2, alpha=0.1, iters=100, burn_in=50, thin=5, seed=42)
        b = fit_lda(docs, len(vocab), k=2, alpha=0.1, iters=100, burn_in=50, thin=5, seed=42)
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.gamma, b.gamma)
        assert np.array_equal(a.theta, b.theta)

    def test_different_seeds_differ(self, apple_car_docs):
        docs, vocab = apple_car_docs
        a = fit_lda(docs, len(vocab), k=2, alpha=0.1, iters=50, burn_in=10, thin=5, seed=1)
        b = fit_lda(docs, len(vocab), k=2, alpha=0.1, iters=50, burn_in=10, thin=5, seed=2)
        assert not np.array_equal(a.gamma, b.gamma)

    def test_simplex_invariants(self):
        docs, _, _ = planted_corpus(30, 20, 3, seed=5, mean_doc_len=12)
        model = fit_lda(docs, 20, k=3, alpha=0.2, iters=80, burn_in=40, thin=4, seed=5)
        assert_model_invariants(model)

    def test_monotone_loglik_expectation(self):
        for seed in range(5):
            docs, _, _ = planted_corpus(40, 30, 4, seed=seed, mean_doc_len=15)
            model = fit_lda(docs, 30, k=4, alpha=0.1, iters=120, burn_in=60, thin=6, seed=seed)
            assert np.mean(model.ll_samples) > model.ll_initial

    def test_preconditions(self):
        with pytest.raises(ValueError, match="document"):
            fit_lda([], 5, k=2, alpha=0.1)
        with pytest.raises(ValueError, match="empty"):
            fit_lda([[0], []], 5, k=2, alpha=0.1)
        with pytest.raises(ValueError, match="topics"):
            fit_lda([[0]], 5, k=1, alpha=0.1)
        with pytest.raises(ValueError, match="burn_in"):
            fit_lda([[0]], 5, k=2, alpha=0.1, iters=10, burn_in=10)

    def test_oversized_k_warns_but_runs(self, caplog):
        with caplog.at_level("WARNING"):
            model = fit_lda([[0, 1]], 2, k=8, alpha=0.5, iters=10, burn_in=5, thin=1, seed=0)
        assert model.k == 8
        assert "token budget" in caplog.text


class TestRestarts:
    def test_single_restart_matches_spawned_chain(self, apple_car_docs):
        docs, vocab = apple_car_docs
        kwargs = dict(k=2, alpha=0.1, iters=40, burn_in=20, thin=2)
        best = fit_with_restarts(docs, len(vocab), seed=5, n_restarts=1, **kwargs)
        stream = np.random.SeedSequence(5).spawn(1)[0]
        direct = fit_lda(docs, len(vocab), seed=stream, **kwargs)
        assert np.array_equal(best.gamma, direct.gamma)
        assert best.seed == 5

    def test_picks_highest_loglik_chain(self):
        docs, beta, _ = planted_corpus(150, 60, 4, alpha=0.1, mean_doc_len=25, seed=3)
        kwargs = dict(k=4, alpha=0.1, iters=60, burn_in=30, thin=3)
        streams = np.random.SeedSequence(9).spawn(4)
        singles = [fit_lda(docs, 60, seed=s, **kwargs) for s in streams]
        best = fit_with_restarts(docs, 60, seed=9, n_restarts=4, **kwargs)
        best_ll = max(np.mean(m.ll_samples) for m in singles)
        assert np.mean(best.ll_samples) == best_ll

    def test_deterministic_across_job_counts(self, apple_car_docs):
        docs, vocab = apple_car_docs
        kwargs = dict(k=2, alpha=0.1, iters=40, burn_in=20, thin=2, n_restarts=3, seed=8)
        a = fit_with_restarts(docs, len(vocab), jobs=1, **kwargs)
        b = fit_with_restarts(docs, len(vocab), jobs=4, **kwargs)
        assert np.array_equal(a.gamma, b.gamma)

    def test_rejects_zero_restarts(self, apple_car_docs):
        docs, vocab = apple_car_docs
        with pytest.raises(ValueError):
            fit_with_restarts(docs, len(vocab), k=2, alpha=0.1, n_restarts=0)


class TestPerplexity:
    def test_v1_corpus_is_exactly_one(self):
        model = fit_lda([[0, 0, 0, 0]], 1, k=2, alpha=0.1, iters=20, burn_in=10, thin=2, seed=0)
        assert perplexity(model, [[0, 0, 0, 0]], seed=1) == 1.0

    def test_uniform_beta_gives_v(self):
        v, k = 7, 3
        model = LdaModel(
            k=k, alpha=0.1, eta=0.01,
            beta=np.full((k, v), 1.0 / v),
            gamma=np.full((1, k), 1.0 / k),
            theta=np.full(k, 1.0 / k),
            doc_lengths=np.array([4]),
            seed=0, iters=1, burn_in=0, thin=1,
        )
        docs = [[0, 1, 2, 3, 4, 5], [6, 0, 2]]
        assert perplexity(model, docs, seed=7) == pytest.approx(v, rel=1e-12)

    def test_planted_model_beats_random_over_seeds(self):
        k, v = 10, 120
        for seed in range(10):
            docs, beta, theta = planted_corpus(60, v, k, alpha=0.1, mean_doc_len=40, seed=seed)
            base = dict(alpha=0.1, eta=0.01, doc_lengths=np.array([40] * 60),
                        seed=0, iters=1, burn_in=0, thin=1)
            gamma = np.full((60, k), 1.0 / k)
            planted = LdaModel(k=k, beta=beta, gamma=gamma, theta=theta, **base)
            rng = np.random.default_rng(seed + 1000)
            random_beta = rng.dirichlet(np.ones(v), size=k)
            shuffled = LdaModel(k=k, beta=random_beta, gamma=gamma, theta=theta, **base)
            held = docs[:20]
            assert perplexity(planted, held, seed=seed) < perplexity(shuffled, held, seed=seed)

    def test_unseen_tokens_dropped_and_counted(self, caplog):
        model = fit_lda([[0, 1], [1, 0]], 2, k=2, alpha=0.1, iters=20, burn_in=10, thin=2, seed=0)
        with caplog.at_level("INFO"):
            value = perplexity(model, [[5, 6, 7], [0, 1, 0, 1]], seed=0)
        assert value > 0
        assert "excluded 1" in caplog.text

    def test_all_docs_unseen_is_error(self):
        model = fit_lda([[0, 1]], 2, k=2, alpha=0.1, iters=20, burn_in=10, thin=2, seed=0)
        with pytest.raises(ValueError):
            perplexity(model, [[9, 9]], seed=0)

    def test_deterministic_given_seed(self):
        docs, _, _ = planted_corpus(20, 15, 3, seed=2, mean_doc_len=10)
        model = fit_lda(docs[:15], 15, k=3, alpha=0.2, iters=50, burn_in=25, thin=5, seed=2)
        a = perplexity(model, docs[15:], seed=9)
        b = perplexity(model, docs[15:], seed=9)
        assert a == b


class TestSweep:
    def test_two_docs_two_folds_boundary(self):
        docs = [[0, 1, 0, 1], [2, 3, 2, 3]]
        result = cv_sweep(docs, 4, k_grid=[2], alpha_multipliers=[1.0], folds=2,
                          iters=20, burn_in=10, thin=2, seed=0,
                          foldin_iters=10, foldin_burn=5)
        assert result.selected_k == 2
        assert len(result.rows) == 2

    def test_row_and_cell_shapes(self):
        docs, _, _ = planted_corpus(20, 15, 3, seed=3, mean_doc_len=10)
        result = cv_sweep(docs, 15, k_grid=[2, 3], alpha_multipliers=[2.0, 1.0],
                          folds=2, iters=20, burn_in=10, thin=2, seed=1,
                          foldin_iters=10, foldin_burn=5)
        assert len(result.rows) == 2 * 2 * 2
        assert len(result.cells) == 4
        for k, alpha, fold, ppl in result.rows:
            assert alpha == pytest.approx({2: 1.0, 3: 2 / 3}[k]) or alpha == pytest.approx({2: 0.5, 3: 1 / 3}[k])
            assert ppl > 0

    def test_tie_break_prefers_smaller_k_then_larger_alpha(self, monkeypatch):
        import vistopics.lda as lda_mod

        monkeypatch.setattr(lda_mod, "perplexity", lambda *a, **kw: 100.0)
        docs = [[0, 1], [1, 0], [0, 0], [1, 1]]
        result = lda_mod.cv_sweep(docs, 2, k_grid=[4, 2], alpha_multipliers=[1.0, 5.0],
                                  folds=2, iters=10, burn_in=5, thin=1, seed=0)
        assert result.selected_k == 2
        assert result.selected_alpha == pytest.approx(5.0 / 2)

    def test_failed_cell_excluded_and_reported(self, monkeypatch, caplog):
        import vistopics.lda as lda_mod

        real_fit = lda_mod.fit_lda

        def sabotaged(docs, n_vocab, k, alpha, **kwargs):
            if k == 3:
                raise RuntimeError("scripted failure")
            return real_fit(docs, n_vocab, k, alpha, **kwargs)

        monkeypatch.setattr(lda_mod, "fit_lda", sabotaged)
        docs = [[0, 1, 0], [1, 0, 1], [0, 0, 1], [1, 1, 0]]
        with caplog.at_level("WARNING"):
            result = lda_mod.cv_sweep(docs, 2, k_grid=[2, 3], alpha_multipliers=[1.0],
                                      folds=2, iters=10, burn_in=5, thin=1, seed=0,
                                      foldin_iters=6, foldin_burn=3)
        assert result.selected_k == 2
        bad = [c for c in result.cells if c.k == 3][0]
        assert not bad.valid
        assert all(math.isnan(p) for p in bad.fold_perplexities)
        assert "failed" in caplog.text

    def test_deterministic_across_parallelism(self):
        docs, _, _ = planted_corpus(16, 12, 2, seed=4, mean_doc_len=8)
        kwargs = dict(k_grid=[2, 3], alpha_multipliers=[1.0], folds=2,
                      iters=15, burn_in=5, thin=2, seed=11,
                      foldin_iters=8, foldin_burn=4)
        serial = cv_sweep(docs, 12, jobs=1, **kwargs)
        parallel = cv_sweep(docs, 12, jobs=4, **kwargs)
        assert serial.rows == parallel.rows

    def test_preconditions(self):
        with pytest.raises(ValueError):
            cv_sweep([[0]], 1, folds=1)
        with pytest.raises(ValueError):
            cv_sweep([[0], [1]], 2, folds=5)


class TestTopTerms:
    def test_v1(self):
        model = fit_lda([[0, 0]], 1, k=2, alpha=0.1, iters=10, burn_in=5, thin=1, seed=0)
        assert top_terms(model, ["w"], 0, 3) == [("w", 1.0)]

    def test_uniform_row_tie_break(self):
        model = LdaModel(k=2, alpha=0.1, eta=0.01,
                         beta=np.full((2, 5), 0.2), gamma=np.full((1, 2), 0.5),
                         theta=np.full(2, 0.5), doc_lengths=np.array([1]),
                         seed=0, iters=1, burn_in=0, thin=1)
        vocab = ["vee", "doubleu", "ex", "why", "zee"]
        assert top_terms(model, vocab, 0, 3) == [("vee", 0.2), ("doubleu", 0.2), ("ex", 0.2)]

    def test_n_larger_than_v(self):
        model = fit_lda([[0, 1]], 2, k=2, alpha=0.1, iters=10, burn_in=5, thin=1, seed=0)
        assert len(top_terms(model, ["aye", "bee"], 0, 10)) == 2

    def test_topic_out_of_range(self):
        model = fit_lda([[0]], 1, k=2, alpha=0.1, iters=10, burn_in=5, thin=1, seed=0)
        with pytest.raises(ValueError):
            top_terms(model, ["w"], 2, 1)


class TestDominantTopic:
    def test_simple(self):
        assert dominant_topic(np.array([0.1, 0.7, 0.2])) == 1

    def test_tie_to_lowest(self):
        assert dominant_topic(np.array([0.5, 0.5])) == 0

    def test_uniform(self):
        assert dominant_topic(np.full(4, 0.25)) == 0


class TestModelArtifact:
    def test_round_trip_is_bitwise(self):
        docs, _, _ = planted_corpus(10, 8, 2, seed=6, mean_doc_len=6)
        model = fit_lda(docs, 8, k=2, alpha=0.3, eta=0.05, iters=30, burn_in=15, thin=3, seed=6)
        doc = json.loads(model_json_text(model))
        again = model_from_json(doc)
        assert np.array_equal(again.beta, model.beta)
        assert np.array_equal(again.gamma, model.gamma)
        assert np.array_equal(again.theta, model.theta)
        assert again.k == model.k and again.alpha == model.alpha and again.eta == model.eta
        assert np.array_equal(again.doc_lengths, model.doc_lengths)

    def test_header_fields_present(self):
        model = fit_lda([[0, 1]], 2, k=2, alpha=0.1, iters=10, burn_in=5, thin=1, seed=9)
        doc = json.loads(model_json_text(model))
        for key in ("schema_version", "k", "alpha", "eta", "seed", "v", "d", "beta", "gamma", "theta"):
            assert key in doc
        assert doc["v"] == 2 and doc["d"] == 1 and doc["seed"] == 9

    def test_seventeen_significant_digits(self):
        model = fit_lda([[0, 1, 0]], 2, k=2, alpha=1 / 3, iters=10, burn_in=5, thin=1, seed=0)
        text = model_json_text(model)
        value = text.split('"beta":[', 1)[1].split(",", 1)[0]
        assert float(value) == model.beta[0, 0]
