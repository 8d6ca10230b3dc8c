"""Compiled inner loops for collapsed Gibbs sampling.

The arithmetic here is deliberately scalar and sequential so a pure-Python
re-implementation performing the same operations in the same order produces
bit-identical count trajectories. Per token i (flat corpus order):

  1. decrement n_dk[d_i, z_i], n_kw[z_i, w_i], n_k[z_i]
  2. running cumulative sum over k of
         p_k = (n_dk[d_i,k] + alpha) * (n_kw[k,w_i] + eta) / (n_k[k] + V*eta)
  3. threshold t = u_i * total; new topic = first k with cum_k > t
     (bounded by K-1)
  4. increment counts at the new topic

u is one uniform draw per token, supplied by the caller per sweep; no
randomness is consumed inside the kernels. fastmath stays off so the
floating-point semantics match CPython exactly.
"""

from __future__ import annotations

from numba import njit


@njit(cache=True, nogil=True)
def gibbs_sweep(w, d, z, n_dk, n_kw, n_k, alpha, eta, u, cumbuf):
    n_tokens = w.shape[0]
    n_topics = n_k.shape[0]
    veta = n_kw.shape[1] * eta
    for i in range(n_tokens):
        wi = w[i]
        di = d[i]
        zi = z[i]
        n_dk[di, zi] -= 1
        n_kw[zi, wi] -= 1
        n_k[zi] -= 1
        cum = 0.0
        for k in range(n_topics):
            p = (n_dk[di, k] + alpha) * (n_kw[k, wi] + eta) / (n_k[k] + veta)
            cum += p
            cumbuf[k] = cum
        t = u[i] * cum
        k = 0
        while k < n_topics - 1 and cumbuf[k] <= t:
            k += 1
        z[i] = k
        n_dk[di, k] += 1
        n_kw[k, wi] += 1
        n_k[k] += 1


@njit(cache=True, nogil=True)
def foldin_sweep(w, z, n_k_doc, beta, alpha, u, cumbuf):
    """One Gibbs sweep over a single held-out document with beta frozen.

    p_k = (n_k_doc[k] + alpha) * beta[k, w_i]; same selection rule as
    gibbs_sweep.
    """
    n_tokens = w.shape[0]
    n_topics = n_k_doc.shape[0]
    for i in range(n_tokens):
        wi = w[i]
        zi = z[i]
        n_k_doc[zi] -= 1
        cum = 0.0
        for k in range(n_topics):
            p = (n_k_doc[k] + alpha) * beta[k, wi]
            cum += p
            cumbuf[k] = cum
        t = u[i] * cum
        k = 0
        while k < n_topics - 1 and cumbuf[k] <= t:
            k += 1
        z[i] = k
        n_k_doc[k] += 1
