"""Turn PPR score vectors into filtered top-k recommendation lists.

Two modes are supported: rank content vertices of the target tag directly by
their PPR score, or take the user's highest-scoring fellow users and rank
content by how many of them interacted with it.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, UnknownUserError
from .graph import HeterogeneousGraph
from .ppr import ScoreVector, SolverConfig, TransitionMatrix, batch_pagerank, build_transition

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    DIRECT = "direct"
    NEIGHBORS = "neighbors"


def _frozen(interactions):
    return None if interactions is None else frozenset(interactions)


@dataclass(frozen=True)
class ExcludeInteracted:
    """Drop items the user already interacted with (optionally only via some interactions)."""

    interactions: frozenset[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "interactions", _frozen(self.interactions))

    def allows(self, item_id: str, interacted: Callable) -> bool:
        return item_id not in interacted(self.interactions)


@dataclass(frozen=True)
class RequirePrerequisite:
    """Allow an item only when the user already has its prerequisite item."""

    prerequisites: Mapping[str, str]
    interactions: frozenset[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "interactions", _frozen(self.interactions))
        object.__setattr__(self, "prerequisites", dict(self.prerequisites))
        for start in self.prerequisites:
            seen = {start}
            item = self.prerequisites[start]
            while item in self.prerequisites:
                if item in seen:
                    raise ConfigError(f"prerequisite map has a cycle through {item!r}")
                seen.add(item)
                item = self.prerequisites[item]

    def allows(self, item_id: str, interacted: Callable) -> bool:
        base = self.prerequisites.get(item_id)
        return base is None or base in interacted(self.interactions)


FilterRule = ExcludeInteracted | RequirePrerequisite


@dataclass(frozen=True)
class RecommendationRequest:
    user_id: str
    target_tag: str
    k: int = 10
    mode: Mode = Mode.DIRECT
    neighbor_count: int = 90
    filters: tuple[FilterRule, ...] = ()
    user_tag: str = "user"
    # interactions counted in neighbor mode; None counts every interaction
    neighbor_interactions: frozenset[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "neighbor_interactions", _frozen(self.neighbor_interactions))
        if self.k < 1:
            raise ConfigError(f"cutoff k must be >= 1, got {self.k}")
        if self.mode is Mode.NEIGHBORS and self.neighbor_count < 1:
            raise ConfigError(f"neighbor count must be >= 1, got {self.neighbor_count}")

    def for_user(self, user_id: str) -> RecommendationRequest:
        return replace(self, user_id=user_id)


@dataclass(frozen=True)
class RankedList:
    user_id: str
    items: tuple[tuple[str, float], ...]
    flags: frozenset[str] = field(default_factory=frozenset)

    @property
    def ids(self) -> list[str]:
        return [item for item, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def apply_filters(
    filters: Sequence[FilterRule], item_ids: Iterable[str], interacted: Callable
) -> list[bool]:
    return [all(f.allows(item, interacted) for f in filters) for item in item_ids]


def _graph_interacted(graph: HeterogeneousGraph, user: int, tag: str) -> Callable:
    cache: dict = {}

    def interacted(interactions):
        if interactions not in cache:
            cache[interactions] = {
                graph.vertices[i].id for i in graph.interacted(user, interactions, tag=tag)
            }
        return cache[interactions]

    return interacted


def _user_index(graph: HeterogeneousGraph, request: RecommendationRequest) -> int:
    idx = graph.get_index(request.user_tag, request.user_id)
    if idx is None:
        raise UnknownUserError(request.user_id)
    return idx


def _finish(graph, request, user, ranked: list[tuple[int, float]]) -> RankedList:
    interacted = _graph_interacted(graph, user, request.target_tag)
    ids = [graph.vertices[i].id for i, _ in ranked]
    keep = apply_filters(request.filters, ids, interacted) if request.filters else [True] * len(ids)
    items = tuple((item, score) for item, (_, score), ok in zip(ids, ranked, keep) if ok)
    flags = frozenset() if items else frozenset({"empty"})
    return RankedList(request.user_id, items[: request.k], flags)


def rank_direct(graph: HeterogeneousGraph, scores: ScoreVector | np.ndarray, request: RecommendationRequest) -> RankedList:
    """Rank target-tag vertices with positive PPR score, best first."""
    user = _user_index(graph, request)
    pi = scores.scores if isinstance(scores, ScoreVector) else np.asarray(scores)
    cand = graph.vertices_with_tag(request.target_tag)
    cand = cand[cand != user]
    s = pi[cand]
    cand, s = cand[s > 0], s[s > 0]
    # candidate indices are in id order within a tag
    order = np.lexsort((cand, -s))
    return _finish(graph, request, user, [(int(cand[o]), float(s[o])) for o in order])


def interaction_map(
    graph: HeterogeneousGraph, user_tag: str, target_tag: str, interactions: Collection[str] | None = None
) -> dict[int, frozenset[int]]:
    """Per user vertex, the target-tag vertices it interacted with (deduplicated)."""
    return {
        int(u): frozenset(graph.interacted(int(u), interactions, tag=target_tag))
        for u in graph.vertices_with_tag(user_tag)
    }


def rank_neighbors(
    graph: HeterogeneousGraph,
    scores: ScoreVector | np.ndarray,
    request: RecommendationRequest,
    neighbor_items: Mapping[int, Collection[int]] | None = None,
) -> RankedList:
    """Rank content by interaction frequency among the user's top-N PPR neighbors.

    Ties fall back to the summed PPR score of the neighbors that interacted
    with the item, then to the item id. Only items with at least one
    interacting neighbor are candidates.
    """
    user = _user_index(graph, request)
    pi = scores.scores if isinstance(scores, ScoreVector) else np.asarray(scores)
    users = graph.vertices_with_tag(request.user_tag)
    users = users[users != user]
    s = pi[users]
    users, s = users[s > 0], s[s > 0]
    top = np.lexsort((users, -s))[: request.neighbor_count]

    count = np.zeros(graph.n_vertices, dtype=np.int64)
    mass = np.zeros(graph.n_vertices)
    for o in top:
        nb = int(users[o])
        if neighbor_items is None:
            items = graph.interacted(nb, request.neighbor_interactions, tag=request.target_tag)
        else:
            items = neighbor_items.get(nb, ())
        if items:
            idx = np.fromiter(items, dtype=np.int64, count=len(items))
            count[idx] += 1
            mass[idx] += s[o]
    cand = np.flatnonzero(count)
    cand = cand[cand != user]
    order = np.lexsort((cand, -mass[cand], -count[cand]))
    return _finish(graph, request, user, [(int(cand[o]), float(count[cand[o]])) for o in order])


def rank(graph, scores, request, neighbor_items=None) -> RankedList:
    if request.mode is Mode.DIRECT:
        return rank_direct(graph, scores, request)
    return rank_neighbors(graph, scores, request, neighbor_items)


def recommend_direct(
    graph: HeterogeneousGraph, weights: Mapping, request: RecommendationRequest, config: SolverConfig = SolverConfig()
) -> RankedList:
    return recommend_many(graph, weights, [request], config)[0]


def recommend_via_neighbors(
    graph: HeterogeneousGraph,
    weights: Mapping,
    request: RecommendationRequest,
    config: SolverConfig = SolverConfig(),
    train_interactions: Mapping[int, Collection[int]] | None = None,
) -> RankedList:
    if request.mode is not Mode.NEIGHBORS:
        request = replace(request, mode=Mode.NEIGHBORS)
    return recommend_many(graph, weights, [request], config, train_interactions)[0]


def recommend_many(
    graph: HeterogeneousGraph,
    weights: Mapping | TransitionMatrix,
    requests: Sequence[RecommendationRequest],
    config: SolverConfig = SolverConfig(),
    neighbor_items: Mapping[int, Collection[int]] | None = None,
    threads: int | None = None,
) -> list[RankedList]:
    """Serve several requests with one batched PPR solve.

    Raises UnknownUserError for the first request whose user is not a graph vertex.
    """
    matrix = weights if isinstance(weights, TransitionMatrix) else build_transition(graph, weights)
    sources = [_user_index(graph, r) for r in requests]
    solved = batch_pagerank(matrix, sources, config, threads=threads)
    return [rank(graph, sv, r, neighbor_items) for sv, r in zip(solved, requests)]
