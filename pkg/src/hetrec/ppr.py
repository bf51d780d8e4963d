"""Edge-weighted Personalized PageRank by power iteration.

The walk from source ``s`` stops at the current vertex with probability
``alpha`` and otherwise follows an out-edge chosen proportionally to its
weight. A walker standing on a vertex without out-edges jumps back to ``s``,
so each solve returns a proper probability distribution.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigError, ConvergenceError
from .graph import HeterogeneousGraph, resolve_weight

logger = logging.getLogger(__name__)

CHUNK_SIZE = 64


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.3
    tolerance: float = 1e-8
    max_iterations: int = 200
    # raise ConvergenceError when the cap is hit; otherwise return the last iterate
    strict: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_iterations) < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic transition matrix plus its transpose for iteration."""

    P: sparse.csr_matrix
    PT: sparse.csr_matrix
    dangling: np.ndarray

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def row(self, i: int) -> list[tuple[int, float]]:
        lo, hi = self.P.indptr[i], self.P.indptr[i + 1]
        return list(zip(self.P.indices[lo:hi].tolist(), self.P.data[lo:hi].tolist()))

    @classmethod
    def from_weighted_edges(cls, n: int, source, target, weight) -> TransitionMatrix:
        source = np.asarray(source, dtype=np.int64)
        target = np.asarray(target, dtype=np.int64)
        weight = np.asarray(weight, dtype=np.float64)
        if weight.size and not (np.all(np.isfinite(weight)) and weight.min() > 0):
            raise ConfigError("edge weights must be finite and > 0")
        W = sparse.csr_matrix((weight, (source, target)), shape=(n, n))
        W.sum_duplicates()
        W.sort_indices()
        row_sum = np.asarray(W.sum(axis=1)).ravel()
        dangling = row_sum == 0
        counts = np.diff(W.indptr)
        data = W.data / np.repeat(row_sum, counts)
        P = sparse.csr_matrix((data, W.indices, W.indptr), shape=(n, n))
        PT = P.T.tocsr()
        PT.sort_indices()
        dangling.flags.writeable = False
        return cls(P=P, PT=PT, dangling=dangling)


def build_transition(graph: HeterogeneousGraph, weights: Mapping) -> TransitionMatrix:
    type_weight = np.array([resolve_weight(et, weights) for et in graph.edge_types], dtype=np.float64)
    return TransitionMatrix.from_weighted_edges(
        graph.n_vertices,
        graph.edge_source,
        graph.edge_target,
        type_weight[graph.edge_type_index] if graph.n_edges else np.empty(0),
    )


@dataclass(frozen=True, eq=False)
class ScoreVector:
    scores: np.ndarray
    source: int
    alpha: float
    iterations: int
    residual: float
    converged: bool = True

    def __len__(self) -> int:
        return len(self.scores)


def personalized_pagerank(matrix: TransitionMatrix, source: int, config: SolverConfig = SolverConfig()) -> ScoreVector:
    return batch_pagerank(matrix, [source], config, threads=1)[0]


def batch_pagerank(
    matrix: TransitionMatrix,
    sources: Sequence[int],
    config: SolverConfig = SolverConfig(),
    threads: int | None = None,
) -> list[ScoreVector]:
    """Solve one PPR vector per source.

    Sources are processed in column blocks. Column reductions are done one
    column at a time so every result is bit-identical to a single-source
    solve regardless of how sources are grouped or threaded.
    """
    sources = [int(s) for s in sources]
    for s in sources:
        if not 0 <= s < matrix.n:
            raise ConfigError(f"source vertex {s} out of range for {matrix.n} vertices")
    if not sources:
        return []
    if threads is None:
        threads = int(os.environ.get("HETREC_THREADS", "1") or 1)
    chunks = [sources[i : i + CHUNK_SIZE] for i in range(0, len(sources), CHUNK_SIZE)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _solve_block(matrix, c, config), chunks))
    else:
        parts = [_solve_block(matrix, c, config) for c in chunks]
    out = [sv for part in parts for sv in part]
    if config.strict:
        for sv in out:
            if not sv.converged:
                raise ConvergenceError(sv.source, sv.iterations, sv.residual, sv)
    return out


def _solve_block(matrix: TransitionMatrix, sources: list[int], config: SolverConfig) -> list[ScoreVector]:
    n, b = matrix.n, len(sources)
    alpha = config.alpha
    damp = 1.0 - alpha
    dangling_idx = np.flatnonzero(matrix.dangling)
    src = np.asarray(sources, dtype=np.int64)

    pi = np.zeros((n, b))
    pi[src, np.arange(b)] = 1.0
    iterations = np.zeros(b, dtype=np.int64)
    residual = np.full(b, np.inf)
    active = np.arange(b)

    for it in range(1, config.max_iterations + 1):
        x = pi[:, active]
        new = damp * np.asarray(matrix.PT @ x)
        for c, col in enumerate(active):
            dangling_mass = x[dangling_idx, c].sum() if dangling_idx.size else 0.0
            new[src[col], c] += alpha + damp * dangling_mass
            residual[col] = np.abs(new[:, c] - x[:, c]).sum()
        pi[:, active] = new
        iterations[active] = it
        active = active[residual[active] >= config.tolerance]
        if active.size == 0:
            break

    out = []
    for c, s in enumerate(sources):
        scores = np.ascontiguousarray(pi[:, c])
        # the restart term alone puts alpha on the source
        assert scores[s] >= alpha, (s, scores[s], alpha)
        scores.flags.writeable = False
        out.append(
            ScoreVector(
                scores=scores,
                source=s,
                alpha=alpha,
                iterations=int(iterations[c]),
                residual=float(residual[c]),
                converged=bool(residual[c] < config.tolerance),
            )
        )
    if active.size:
        logger.warning("%d of %d PPR solves hit the iteration cap", active.size, b)
    return out
