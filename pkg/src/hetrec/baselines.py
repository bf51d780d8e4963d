"""Non-graph reference recommenders: Most Popular and user-based KNN."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence

import numpy as np
from scipy import sparse

from .graph import EdgeTypeRegistry, InteractionRecord
from .recommender import RankedList, RecommendationRequest, apply_filters

logger = logging.getLogger(__name__)


class InteractionMatrixView:
    """Binarized user -> object interactions derived from training records.

    Only records whose acting vertex carries ``user_tag`` are included, so
    object-to-object relations (a comment under a post) stay out.
    """

    def __init__(
        self,
        records: Iterable[InteractionRecord],
        registry: EdgeTypeRegistry,
        user_tag: str = "user",
        catalog: Iterable[tuple[str, str]] = (),
    ):
        self.user_tag = user_tag
        # user -> (tag, id) -> interactions used
        self.user_objects: dict[str, dict[tuple[str, str], set[str]]] = defaultdict(lambda: defaultdict(set))
        for rec in records:
            if registry.definition(rec.interaction).source_tag != user_tag:
                continue
            self.user_objects[rec.user_id][(rec.object_tag, rec.object_id)].add(rec.interaction)
        self.user_objects = {u: dict(objs) for u, objs in self.user_objects.items()}

        counts: dict[tuple[str, str], int] = defaultdict(int)
        for objs in self.user_objects.values():
            for obj in objs:
                counts[obj] += 1
        for obj in catalog:
            counts.setdefault(tuple(obj), 0)
        self.item_counts: dict[tuple[str, str], int] = dict(counts)

        self.users: list[str] = sorted(self.user_objects)
        self._user_row = {u: i for i, u in enumerate(self.users)}
        self._matrix: sparse.csr_matrix | None = None
        self._sizes: np.ndarray | None = None

    def __contains__(self, user_id: str) -> bool:
        return user_id in self.user_objects

    def interacted(self, user_id: str, interactions=None, tag: str | None = None) -> set[str]:
        found = set()
        for (t, oid), used in self.user_objects.get(user_id, {}).items():
            if tag is not None and t != tag:
                continue
            if interactions is None or used & interactions:
                found.add(oid)
        return found

    def items(self, tag: str) -> dict[str, int]:
        return {oid: c for (t, oid), c in self.item_counts.items() if t == tag}

    @property
    def matrix(self) -> sparse.csr_matrix:
        """Binary user x object matrix, rows in ``self.users`` order."""
        if self._matrix is None:
            objects = sorted(self.item_counts)
            col = {o: j for j, o in enumerate(objects)}
            rows, cols = [], []
            for i, u in enumerate(self.users):
                for obj in self.user_objects[u]:
                    rows.append(i)
                    cols.append(col[obj])
            self._matrix = sparse.csr_matrix(
                (np.ones(len(rows)), (rows, cols)), shape=(len(self.users), len(objects))
            )
            self._sizes = np.asarray(self._matrix.sum(axis=1)).ravel()
        return self._matrix

    def similarities(self, user_id: str) -> np.ndarray:
        """Cosine similarity of ``user_id`` to every user in ``self.users``."""
        X = self.matrix
        i = self._user_row[user_id]
        overlap = np.asarray((X @ X[i].T).todense()).ravel()
        denom = np.sqrt(self._sizes * self._sizes[i])
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(denom > 0, overlap / denom, 0.0)
        return sims


def cosine(a: set, b: set) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / math.sqrt(len(a) * len(b))


def _filtered(view: InteractionMatrixView, request: RecommendationRequest, ranked: Sequence[tuple[str, float]]):
    cache: dict = {}

    def interacted(interactions):
        if interactions not in cache:
            cache[interactions] = view.interacted(request.user_id, interactions, tag=request.target_tag)
        return cache[interactions]

    keep = apply_filters(request.filters, [i for i, _ in ranked], interacted)
    return tuple(item for item, ok in zip(ranked, keep) if ok)


def most_popular(view: InteractionMatrixView, target_tag: str, request: RecommendationRequest) -> RankedList:
    """Items of ``target_tag`` by number of interacting users, ties by id."""
    counts = view.items(target_tag)
    ranked = sorted(((oid, float(c)) for oid, c in counts.items()), key=lambda x: (-x[1], x[0]))
    items = _filtered(view, request, ranked)
    flags = frozenset() if items else frozenset({"empty"})
    return RankedList(request.user_id, items[: request.k], flags)


def ubknn_recommend(
    view: InteractionMatrixView, user_id: str, k_neighbors: int, request: RecommendationRequest
) -> RankedList:
    """User-based KNN over binarized interaction sets with cosine similarity.

    Users without training interactions get the Most Popular list.
    """
    if user_id not in view:
        logger.debug("ubknn: cold user %s, falling back to most popular", user_id)
        fallback = most_popular(view, request.target_tag, request)
        return RankedList(fallback.user_id, fallback.items, fallback.flags | {"fallback_popular"})

    sims = view.similarities(user_id)
    me = view._user_row[user_id]
    sims[me] = 0.0
    # user rows are in id order, so a stable sort on -sim breaks ties by id
    order = np.argsort(-sims, kind="stable")
    neighbors = [j for j in order[:k_neighbors] if sims[j] > 0]

    count: dict[str, int] = defaultdict(int)
    mass: dict[str, float] = defaultdict(float)
    for j in neighbors:
        nb = view.users[j]
        for oid in view.interacted(nb, request.neighbor_interactions, tag=request.target_tag):
            count[oid] += 1
            mass[oid] += float(sims[j])
    ranked = sorted(((oid, float(c)) for oid, c in count.items()), key=lambda x: (-x[1], -mass[x[0]], x[0]))
    items = _filtered(view, request, ranked)
    flags = frozenset() if items else frozenset({"empty"})
    return RankedList(request.user_id, items[: request.k], flags)
