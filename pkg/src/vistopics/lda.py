"""Latent Dirichlet Allocation by collapsed Gibbs sampling.

Covers model fitting, held-out perplexity by document completion, the
cross-validated (K, alpha) grid search, and the portable model artifact.

Randomness is PCG64 throughout. A fit consumes its generator in a fixed
pattern — one ``integers`` call for the initial assignments, then one
``random(n_tokens)`` call per sweep — so results are bit-reproducible
given the seed, and sweep cells get independent spawned streams so the
grid search parallelizes without losing determinism.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import foldin_sweep, gibbs_sweep

log = logging.getLogger(__name__)


@dataclass
class LdaModel:
    k: int
    alpha: float
    eta: float
    beta: np.ndarray  # (K, V) row-stochastic term-topic probabilities
    gamma: np.ndarray  # (D, K) row-stochastic document-topic probabilities
    theta: np.ndarray  # (K,) corpus topic prevalence, token-weighted
    doc_lengths: np.ndarray  # (D,) modeled token counts
    seed: int
    iters: int
    burn_in: int
    thin: int
    ll_initial: float = 0.0
    ll_samples: list[float] = field(default_factory=list)

    @property
    def n_vocab(self) -> int:
        return self.beta.shape[1]

    @property
    def n_docs(self) -> int:
        return self.gamma.shape[0]


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _flatten(docs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    w = np.array([t for doc in docs for t in doc], dtype=np.int64)
    d = np.array([i for i, doc in enumerate(docs) for _ in doc], dtype=np.int64)
    return w, d


def _token_loglik(w, d, n_dk, n_kw, n_k, n_d, alpha, eta, k, v) -> float:
    beta = (n_kw + eta) / (n_k + v * eta)[:, None]
    gamma = (n_dk + alpha) / (n_d + k * alpha)[:, None]
    p = np.einsum("nk,nk->n", gamma[d], beta[:, w].T)
    return float(np.log(p).sum())


def fit_lda(
    docs: list[list[int]],
    n_vocab: int,
    k: int,
    alpha: float,
    eta: float = 0.01,
    iters: int = 1000,
    burn_in: int = 500,
    thin: int = 10,
    seed=0,
) -> LdaModel:
    """Fit by collapsed Gibbs sampling; point estimates averaged over
    post-burn-in samples taken every `thin` sweeps.

    Fully deterministic given the seed (an int or a SeedSequence).
    """
    n_docs = len(docs)
    if n_docs < 1:
        raise ValueError("need at least one document")
    if n_vocab < 1:
        raise ValueError("need a non-empty vocabulary")
    if k < 2:
        raise ValueError("need at least 2 topics")
    if not iters > burn_in >= 0:
        raise ValueError("need iters > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    for i, doc in enumerate(docs):
        if not doc:
            raise ValueError(f"document {i} is empty; preprocessing must drop empty docs")
    max_len = max(len(doc) for doc in docs)
    if k > n_docs * max_len:
        log.warning("K=%d exceeds corpus token budget (D=%d, max len %d)", k, n_docs, max_len)

    w, d = _flatten(docs)
    n_tokens = w.shape[0]
    rng = _generator(seed)
    z = rng.integers(0, k, size=n_tokens)

    n_dk = np.zeros((n_docs, k), dtype=np.int64)
    n_kw = np.zeros((k, n_vocab), dtype=np.int64)
    n_k = np.zeros(k, dtype=np.int64)
    np.add.at(n_dk, (d, z), 1)
    np.add.at(n_kw, (z, w), 1)
    np.add.at(n_k, z, 1)
    n_d = np.array([len(doc) for doc in docs], dtype=np.int64)

    cumbuf = np.empty(k, dtype=np.float64)
    ll_initial = _token_loglik(w, d, n_dk, n_kw, n_k, n_d, alpha, eta, k, n_vocab)

    beta_acc = np.zeros((k, n_vocab), dtype=np.float64)
    gamma_acc = np.zeros((n_docs, k), dtype=np.float64)
    n_samples = 0
    ll_samples: list[float] = []
    for sweep in range(1, iters + 1):
        u = rng.random(n_tokens)
        gibbs_sweep(w, d, z, n_dk, n_kw, n_k, alpha, eta, u, cumbuf)
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            beta_acc += (n_kw + eta) / (n_k + n_vocab * eta)[:, None]
            gamma_acc += (n_dk + alpha) / (n_d + k * alpha)[:, None]
            n_samples += 1
            ll_samples.append(
                _token_loglik(w, d, n_dk, n_kw, n_k, n_d, alpha, eta, k, n_vocab)
            )
    if n_samples == 0:
        # thin wider than the post-burn-in window: fall back to the final state
        beta_acc = (n_kw + eta) / (n_k + n_vocab * eta)[:, None]
        gamma_acc = (n_dk + alpha) / (n_d + k * alpha)[:, None]
        n_samples = 1

    beta = beta_acc / n_samples
    gamma = gamma_acc / n_samples
    theta = (n_d @ gamma) / n_d.sum()
    return LdaModel(
        k=k, alpha=alpha, eta=eta, beta=beta, gamma=gamma, theta=theta,
        doc_lengths=n_d,
        seed=int(seed) if not isinstance(seed, np.random.SeedSequence) else -1,
        iters=iters, burn_in=burn_in, thin=thin,
        ll_initial=ll_initial, ll_samples=ll_samples,
    )


def fit_with_restarts(
    docs: list[list[int]],
    n_vocab: int,
    k: int,
    alpha: float,
    eta: float = 0.01,
    iters: int = 1000,
    burn_in: int = 500,
    thin: int = 10,
    seed=0,
    n_restarts: int = 1,
    jobs: int | None = None,
) -> LdaModel:
    """Run independent chains on spawned streams and keep the one with the
    highest mean post-burn-in training log-likelihood.

    Single-site Gibbs can stick in merged-topic modes; restarting and
    selecting by training likelihood escapes them without changing the
    sampler. Ties break to the earliest chain, so the result is
    deterministic given the seed.
    """
    if n_restarts < 1:
        raise ValueError("need at least one restart")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    streams = ss.spawn(n_restarts)

    def one(stream):
        return fit_lda(docs, n_vocab, k, alpha, eta=eta, iters=iters,
                       burn_in=burn_in, thin=thin, seed=stream)

    if n_restarts == 1:
        best = one(streams[0])
    else:
        with ThreadPoolExecutor(max_workers=jobs or 2) as pool:
            models = list(pool.map(one, streams))
        best = max(enumerate(models), key=lambda im: (np.mean(im[1].ll_samples), -im[0]))[1]
    if not isinstance(seed, np.random.SeedSequence):
        best.seed = int(seed)
    return best


def perplexity(
    model: LdaModel,
    docs: list[list[int]],
    seed=0,
    foldin_iters: int = 100,
    foldin_burn: int = 50,
) -> float:
    """Held-out perplexity by document completion.

    Each document's tokens split by position — even indices fold in, odd
    indices evaluate. The document mixture is estimated by Gibbs fold-in
    on the even half with beta frozen, then
    perplexity = exp(-sum(log p(w)) / n_eval) over the odd half.
    Tokens outside the training vocabulary are dropped; documents losing
    every token are excluded and counted.
    """
    v = model.n_vocab
    k = model.k
    if not foldin_iters > foldin_burn >= 0:
        raise ValueError("need foldin_iters > foldin_burn >= 0")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    streams = ss.spawn(len(docs))
    cumbuf = np.empty(k, dtype=np.float64)
    total_ll = 0.0
    n_eval = 0
    n_excluded = 0
    for doc, stream in zip(docs, streams):
        known = [t for t in doc if 0 <= t < v]
        if not known:
            n_excluded += 1
            continue
        fold = np.array(known[0::2], dtype=np.int64)
        evaluate = np.array(known[1::2], dtype=np.int64)
        rng = np.random.Generator(np.random.PCG64(stream))
        z = rng.integers(0, k, size=fold.shape[0])
        n_k_doc = np.bincount(z, minlength=k).astype(np.int64)
        gamma_acc = np.zeros(k, dtype=np.float64)
        for sweep in range(1, foldin_iters + 1):
            u = rng.random(fold.shape[0])
            foldin_sweep(fold, z, n_k_doc, model.beta, model.alpha, u, cumbuf)
            if sweep > foldin_burn:
                gamma_acc += n_k_doc + model.alpha
        if evaluate.shape[0]:
            # normalize in the log domain; the all-ones column makes the
            # normalizer share the matmul path, so a V=1 vocabulary yields
            # log p = 0 exactly
            cols = np.concatenate([model.beta[:, evaluate], np.ones((k, 1))], axis=1)
            scores = gamma_acc @ cols
            total_ll += float(np.log(scores[:-1]).sum()
                              - evaluate.shape[0] * np.log(scores[-1]))
            n_eval += evaluate.shape[0]
    if n_excluded:
        log.info("perplexity: excluded %d documents with no in-vocabulary tokens", n_excluded)
    if n_eval == 0:
        raise ValueError("no evaluation tokens in held-out set")
    return math.exp(-total_ll / n_eval)


@dataclass
class SweepCell:
    k: int
    alpha: float
    fold_perplexities: list[float]
    mean: float
    std: float
    valid: bool


@dataclass
class SweepResult:
    rows: list[tuple[int, float, int, float]]  # (K, alpha, fold, perplexity)
    cells: list[SweepCell]
    selected_k: int
    selected_alpha: float


DEFAULT_K_GRID = tuple(range(5, 101, 5))
DEFAULT_ALPHA_MULTIPLIERS = (25.0, 10.0, 5.0, 2.0, 1.0)


def cv_sweep(
    docs: list[list[int]],
    n_vocab: int,
    k_grid=DEFAULT_K_GRID,
    alpha_multipliers=DEFAULT_ALPHA_MULTIPLIERS,
    folds: int = 5,
    eta: float = 0.01,
    iters: int = 1000,
    burn_in: int = 500,
    thin: int = 10,
    seed=0,
    jobs: int | None = None,
    foldin_iters: int = 100,
    foldin_burn: int = 50,
) -> SweepResult:
    """Cross-validated grid search over (K, alpha = multiplier / K).

    Documents are shuffled once by seed and split into `folds` folds; every
    (cell, fold) job trains on the other folds and scores perplexity on the
    held fold, on its own spawned RNG stream so parallel execution stays
    deterministic. The minimum mean perplexity wins; ties break to smaller
    K, then larger alpha.
    """
    n_docs = len(docs)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n_docs < folds:
        raise ValueError(f"need at least {folds} documents for {folds}-fold CV")

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    cells = [(k, m) for k in k_grid for m in alpha_multipliers]
    streams = ss.spawn(1 + len(cells) * folds)
    shuffle_rng = np.random.Generator(np.random.PCG64(streams[0]))
    perm = shuffle_rng.permutation(n_docs)
    fold_indices = np.array_split(perm, folds)

    def run_job(job: tuple[int, int]) -> float:
        cell_idx, fold = job
        k, m = cells[cell_idx]
        alpha = m / k
        stream = streams[1 + cell_idx * folds + fold]
        fit_seed, ppl_seed = stream.spawn(2)
        held = set(fold_indices[fold].tolist())
        train = [docs[i] for i in range(n_docs) if i not in held]
        test = [docs[i] for i in sorted(held)]
        model = fit_lda(train, n_vocab, k, alpha, eta=eta, iters=iters,
                        burn_in=burn_in, thin=thin, seed=fit_seed)
        return perplexity(model, test, seed=ppl_seed,
                          foldin_iters=foldin_iters, foldin_burn=foldin_burn)

    jobs_list = [(ci, f) for ci in range(len(cells)) for f in range(folds)]
    with ThreadPoolExecutor(max_workers=jobs or 2) as pool:
        futures = {job: pool.submit(run_job, job) for job in jobs_list}

    rows: list[tuple[int, float, int, float]] = []
    cell_results: list[SweepCell] = []
    for cell_idx, (k, m) in enumerate(cells):
        alpha = m / k
        ppls: list[float] = []
        valid = True
        for fold in range(folds):
            try:
                ppl = futures[(cell_idx, fold)].result()
            except Exception as exc:
                log.warning("sweep cell K=%d alpha=%.4g fold %d failed: %s", k, alpha, fold, exc)
                ppl = float("nan")
                valid = False
            ppls.append(ppl)
            rows.append((k, alpha, fold, ppl))
        finite = [p for p in ppls if not math.isnan(p)]
        mean = float(np.mean(finite)) if finite else float("nan")
        std = float(np.std(finite)) if finite else float("nan")
        cell_results.append(SweepCell(k=k, alpha=alpha, fold_perplexities=ppls,
                                      mean=mean, std=std, valid=valid))

    candidates = [c for c in cell_results if c.valid]
    if not candidates:
        raise RuntimeError("every sweep cell failed to fit")
    best = min(candidates, key=lambda c: (c.mean, c.k, -c.alpha))
    return SweepResult(rows=rows, cells=cell_results,
                       selected_k=best.k, selected_alpha=best.alpha)


def top_terms(model: LdaModel, vocabulary: list[str], topic: int, n: int) -> list[tuple[str, float]]:
    """The n most probable terms of one topic; ties break to the lower token id."""
    if not 0 <= topic < model.k:
        raise ValueError(f"topic {topic} out of range for K={model.k}")
    row = model.beta[topic]
    order = np.lexsort((np.arange(row.shape[0]), -row))
    return [(vocabulary[i], float(row[i])) for i in order[: min(n, row.shape[0])]]


def dominant_topic(gamma_row: np.ndarray) -> int:
    """argmax with ties to the lowest index."""
    return int(np.argmax(gamma_row))


# -- portable model artifact -------------------------------------------------

def _fmt_array(xs: np.ndarray) -> str:
    return "[" + ",".join(format(float(x), ".17g") for x in xs.ravel()) + "]"


def model_json_text(model: LdaModel, schema_version: int = 1) -> str:
    """Serialize with 17-significant-digit decimals so float64 round-trips."""
    header = {
        "schema_version": schema_version,
        "k": model.k,
        "alpha": model.alpha,
        "eta": model.eta,
        "seed": model.seed,
        "v": model.n_vocab,
        "d": model.n_docs,
        "iters": model.iters,
        "burn_in": model.burn_in,
        "thin": model.thin,
        "ll_initial": model.ll_initial,
        "ll_samples": model.ll_samples,
        "doc_lengths": model.doc_lengths.tolist(),
    }
    parts = json.dumps(header)[:-1]  # strip closing brace, splice arrays in
    return (
        parts
        + ',"beta":' + _fmt_array(model.beta)
        + ',"gamma":' + _fmt_array(model.gamma)
        + ',"theta":' + _fmt_array(model.theta)
        + "}"
    )


def model_from_json(doc: dict) -> LdaModel:
    k, v, d = int(doc["k"]), int(doc["v"]), int(doc["d"])
    return LdaModel(
        k=k,
        alpha=float(doc["alpha"]),
        eta=float(doc["eta"]),
        beta=np.array(doc["beta"], dtype=np.float64).reshape(k, v),
        gamma=np.array(doc["gamma"], dtype=np.float64).reshape(d, k),
        theta=np.array(doc["theta"], dtype=np.float64),
        doc_lengths=np.array(doc["doc_lengths"], dtype=np.int64),
        seed=int(doc["seed"]),
        iters=int(doc["iters"]),
        burn_in=int(doc["burn_in"]),
        thin=int(doc["thin"]),
        ll_initial=float(doc["ll_initial"]),
        ll_samples=[float(x) for x in doc["ll_samples"]],
    )
