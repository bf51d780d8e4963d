"""Independent reference computations used to check the production code.

Nothing here imports the solver or metric code under test: the dense
linear solve and the walk simulator work from raw edge lists.
"""

from __future__ import annotations

import numpy as np


def dense_transition(n, edges):
    """Row-stochastic matrix from (src, dst, weight) triples, built with plain loops."""
    W = np.zeros((n, n))
    for s, t, w in edges:
        W[s, t] += w
    P = np.zeros((n, n))
    for i in range(n):
        total = W[i].sum()
        if total > 0:
            P[i] = W[i] / total
    return P


def ppr_linear_solve(n, edges, source, alpha):
    """Solve (I - (1-alpha) Pt^T) pi = alpha e_s, with dangling rows sent to the source."""
    P = dense_transition(n, edges)
    for i in range(n):
        if P[i].sum() == 0:
            P[i, source] = 1.0
    e = np.zeros(n)
    e[source] = 1.0
    return np.linalg.solve(np.eye(n) - (1 - alpha) * P.T, alpha * e)


def ppr_monte_carlo(n, edges, source, alpha, walks=1_000_000, seed=0):
    """Distribution of stopping vertices of simulated alpha-discounted walks.

    A walker on a vertex without out-edges is sent back to the source.
    """
    rng = np.random.default_rng(seed)
    P = dense_transition(n, edges)
    cum = np.cumsum(P, axis=1)
    dangling = P.sum(axis=1) == 0
    pos = np.full(walks, source)
    alive = np.ones(walks, dtype=bool)
    end = np.empty(walks, dtype=np.int64)
    while alive.any():
        idx = np.flatnonzero(alive)
        stop = rng.random(idx.size) < alpha
        end[idx[stop]] = pos[idx[stop]]
        alive[idx[stop]] = False
        movers = idx[~stop]
        cur = pos[movers]
        u = rng.random(movers.size)
        nxt = np.empty(movers.size, dtype=np.int64)
        for v in np.unique(cur):
            sel = cur == v
            if dangling[v]:
                nxt[sel] = source
            else:
                nxt[sel] = np.minimum(np.searchsorted(cum[v], u[sel], side="right"), n - 1)
        pos[movers] = nxt
    return np.bincount(end, minlength=n) / walks


def random_graph(rng, n, density=0.2, wlo=0.01, whi=2.0):
    """Random directed graph without self-loops; returns a list of (src, dst, weight)."""
    edges = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                edges.append((i, j, float(rng.uniform(wlo, whi))))
    return edges


def rr_bruteforce(ranked, truth, k):
    best = 0.0
    for pos in range(min(k, len(ranked))):
        if ranked[pos] in truth:
            best = max(best, 1.0 / (pos + 1))
    return best


def hit_bruteforce(ranked, truth, k):
    return 1 if set(ranked[:k]) & set(truth) else 0
