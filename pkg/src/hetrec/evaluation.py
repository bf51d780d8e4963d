"""Train/validation/test splits, ranking metrics and dataset statistics."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import ConfigError, DataError
from .graph import EdgeTypeRegistry, InteractionRecord
from .recommender import RankedList


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    user_id: str
    items: frozenset[str]
    cut: datetime

    def __post_init__(self):
        object.__setattr__(self, "items", frozenset(self.items))
        if not self.items:
            raise ValueError("test case needs at least one ground-truth item")


@dataclass
class EvalSplit:
    """Test cases against ``train``; validation cases against ``validation_train``.

    ``validation_train`` is ``train`` with the validation users' later
    records removed, obtained by re-applying the test rule to ``train``.
    """

    train: list[InteractionRecord]
    test: list[TestCase]
    validation_train: list[InteractionRecord]
    validation: list[TestCase]
    user_tag: str = "user"
    registry: EdgeTypeRegistry | None = field(default=None, repr=False)

    def leakage(self) -> list[tuple[TestCase, InteractionRecord]]:
        """Training records at or after their user's cut; empty when the split is clean."""
        bad = []
        for cases, records in ((self.test, self.train), (self.validation, self.validation_train)):
            owner = _owner_fn(self.registry, self.user_tag)
            cut = _earliest_cut(cases)
            by_user = {c.user_id: c for c in cases}
            for rec in records:
                u = owner(rec)
                if u in cut and rec.timestamp >= cut[u]:
                    bad.append((by_user[u], rec))
        return bad


def _owner_fn(registry: EdgeTypeRegistry | None, user_tag: str):
    """Map a record to the user who performed it, or None for object-object relations."""
    if registry is None:
        return lambda rec: rec.user_id
    src = {name: d.source_tag for name, d in registry.definitions.items()}
    return lambda rec: rec.user_id if src.get(rec.interaction) == user_tag else None


def _earliest_cut(cases: Iterable[TestCase]) -> dict[str, datetime]:
    cut: dict[str, datetime] = {}
    for c in cases:
        if c.user_id not in cut or c.cut < cut[c.user_id]:
            cut[c.user_id] = c.cut
    return cut


def _purge(records, cases, owner) -> list[InteractionRecord]:
    cut = _earliest_cut(cases)
    out = []
    for rec in records:
        u = owner(rec)
        # strict: records sharing the cut timestamp are dropped too
        if u in cut and rec.timestamp >= cut[u]:
            continue
        out.append(rec)
    return out


def _is_target(rec: InteractionRecord, interaction: str, tag: str | None) -> bool:
    return rec.interaction == interaction and (tag is None or rec.object_tag == tag)


def holdout_leave_one_out(
    records: Sequence[InteractionRecord],
    interaction: str,
    tag: str | None = None,
    registry: EdgeTypeRegistry | None = None,
    user_tag: str = "user",
) -> tuple[list[InteractionRecord], list[TestCase]]:
    """One leave-one-out pass: (purged records, held-out cases)."""
    return _leave_one_out(list(records), interaction, tag, _owner_fn(registry, user_tag))


def holdout_temporal(
    records: Sequence[InteractionRecord],
    interaction: str,
    fraction: float,
    tag: str | None = None,
    registry: EdgeTypeRegistry | None = None,
    user_tag: str = "user",
    allow_empty: bool = False,
) -> tuple[list[InteractionRecord], list[TestCase]]:
    """One temporal pass: (purged records, held-out cases)."""
    return _temporal(list(records), interaction, tag, fraction, _owner_fn(registry, user_tag), allow_empty)


def _leave_one_out(records, interaction, tag, owner):
    per_user: dict[str, list[tuple[datetime, int, InteractionRecord]]] = defaultdict(list)
    for pos, rec in enumerate(records):
        u = owner(rec)
        if u is not None and _is_target(rec, interaction, tag):
            per_user[u].append((rec.timestamp, pos, rec))
    cases = []
    for u in sorted(per_user):
        events = per_user[u]
        if len(events) > 1:
            ts, _, last = max(events, key=lambda e: (e[0], e[1]))
            cases.append(TestCase(u, frozenset({last.object_id}), ts))
    return _purge(records, cases, owner), cases


def split_leave_one_out(
    records: Sequence[InteractionRecord],
    target_interaction: str,
    target_tag: str | None = None,
    registry: EdgeTypeRegistry | None = None,
    user_tag: str = "user",
) -> EvalSplit:
    """Hold out each user's latest target interaction, for users with more than one.

    Timestamp ties resolve to the later record in input order.
    """
    owner = _owner_fn(registry, user_tag)
    train, test = _leave_one_out(list(records), target_interaction, target_tag, owner)
    if not test:
        raise DataError(f"no user has more than one {target_interaction!r} interaction")
    validation_train, validation = _leave_one_out(train, target_interaction, target_tag, owner)
    return EvalSplit(train, test, validation_train, validation, user_tag, registry)


def _temporal(records, interaction, tag, fraction, owner, allow_empty=False):
    events: dict[tuple[str, datetime], set[str]] = defaultdict(set)
    for rec in records:
        u = owner(rec)
        if u is not None and _is_target(rec, interaction, tag):
            events[(u, rec.timestamp)].add(rec.object_id)
    if len(events) < 2:
        if allow_empty:
            return list(records), []
        raise DataError(f"need at least 2 {interaction!r} events for a temporal split, found {len(events)}")
    ordered = sorted(events, key=lambda e: (e[1], e[0]))
    # guard against 0.1 * 30 == 3.0000000000000004
    n_test = max(1, math.ceil(fraction * len(ordered) - 1e-9))
    cases = [TestCase(u, frozenset(events[(u, ts)]), ts) for u, ts in ordered[-n_test:]]
    cases.sort(key=lambda c: (c.user_id, c.cut))
    return _purge(records, cases, owner), cases


def split_temporal(
    records: Sequence[InteractionRecord],
    target_interaction: str,
    fraction: float = 0.1,
    target_tag: str | None = None,
    registry: EdgeTypeRegistry | None = None,
    user_tag: str = "user",
) -> EvalSplit:
    """Hold out the latest ``fraction`` of target events.

    An event is one user's target interactions sharing a timestamp; items
    bought together form one case's ground-truth set.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    owner = _owner_fn(registry, user_tag)
    train, test = _temporal(list(records), target_interaction, target_tag, fraction, owner)
    validation_train, validation = _temporal(
        train, target_interaction, target_tag, fraction, owner, allow_empty=True
    )
    return EvalSplit(train, test, validation_train, validation, user_tag, registry)


def subsample_training(records: Sequence[InteractionRecord], fraction: float, seed: int) -> list[InteractionRecord]:
    """Seeded uniform subset of ``round(fraction * len(records))`` records, input order kept."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"sample fraction must lie in (0, 1], got {fraction}")
    records = list(records)
    if fraction == 1.0:
        return records
    n = int(round(fraction * len(records)))
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(records), size=n, replace=False))
    return [records[i] for i in keep]


# -- metrics ---------------------------------------------------------------


def _ids(ranked) -> list[str]:
    return ranked.ids if isinstance(ranked, RankedList) else list(ranked)


def _check(truth, k):
    if not truth:
        raise ValueError("truth set is empty")
    if k < 1:
        raise ValueError(f"cutoff must be >= 1, got {k}")


def reciprocal_rank_at_k(ranked, truth: Iterable[str], k: int) -> float:
    truth = set(truth)
    _check(truth, k)
    for rank, item in enumerate(_ids(ranked)[:k], start=1):
        if item in truth:
            return 1.0 / rank
    return 0.0


def hit_at_k(ranked, truth: Iterable[str], k: int) -> int:
    truth = set(truth)
    _check(truth, k)
    return int(any(item in truth for item in _ids(ranked)[:k]))


def ndcg_at_k(ranked, truth: Iterable[str], k: int) -> float:
    truth = set(truth)
    _check(truth, k)
    dcg = sum(1.0 / math.log2(r + 1) for r, item in enumerate(_ids(ranked)[:k], start=1) if item in truth)
    ideal = sum(1.0 / math.log2(r + 1) for r in range(1, min(len(truth), k) + 1))
    return dcg / ideal


def average_precision_at_k(ranked, truth: Iterable[str], k: int) -> float:
    truth = set(truth)
    _check(truth, k)
    hits, total = 0, 0.0
    for r, item in enumerate(_ids(ranked)[:k], start=1):
        if item in truth:
            hits += 1
            total += hits / r
    return total / min(len(truth), k)


METRICS = {
    "mrr": reciprocal_rank_at_k,
    "hr": hit_at_k,
    "ndcg": ndcg_at_k,
    "map": average_precision_at_k,
}


@dataclass(frozen=True)
class CaseMetrics:
    user_id: str
    cut: datetime
    rr: Mapping[int, float]
    hit: Mapping[int, int]
    flags: frozenset[str] = frozenset()


@dataclass
class MetricsReport:
    model: str
    cutoffs: tuple[int, ...]
    cases: list[CaseMetrics]
    skipped: int = 0
    fallback: int = 0

    @property
    def aggregates(self) -> dict[str, float]:
        out = {}
        n = len(self.cases)
        for k in self.cutoffs:
            out[f"MRR@{k}"] = math.fsum(c.rr[k] for c in self.cases) / n if n else 0.0
            out[f"HR@{k}"] = math.fsum(c.hit[k] for c in self.cases) / n if n else 0.0
        return out

    def rows(self) -> list[tuple[str, str, int, float, int]]:
        return [
            (c.user_id, self.model, k, c.rr[k], c.hit[k])
            for c in self.cases
            for k in self.cutoffs
        ]

    def summary(self) -> dict:
        return {
            "model": self.model,
            "cases": len(self.cases),
            "skipped": self.skipped,
            "fallback": self.fallback,
            "metrics": self.aggregates,
        }


def score_lists(
    model: str, cases: Sequence[TestCase], lists: Sequence[RankedList], cutoffs: Sequence[int]
) -> MetricsReport:
    """Per-case RR and hit at every cutoff, in canonical (user, cut) order."""
    cutoffs = tuple(sorted(set(cutoffs)))
    rows = []
    for case, ranked in sorted(zip(cases, lists), key=lambda p: (p[0].user_id, p[0].cut)):
        rows.append(
            CaseMetrics(
                user_id=case.user_id,
                cut=case.cut,
                rr={k: reciprocal_rank_at_k(ranked, case.items, k) for k in cutoffs},
                hit={k: hit_at_k(ranked, case.items, k) for k in cutoffs},
                flags=ranked.flags,
            )
        )
    fallback = sum("fallback_popular" in r.flags for r in rows)
    return MetricsReport(model, cutoffs, rows, fallback=fallback)


# -- statistics ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    users: int
    objects: int
    interactions: int
    sparsity: float
    per_type: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "users": self.users,
            "objects": self.objects,
            "interactions": self.interactions,
            "sparsity": self.sparsity,
            "per_type": dict(self.per_type),
        }


def dataset_stats(
    records: Sequence[InteractionRecord], registry: EdgeTypeRegistry | None = None, user_tag: str = "user"
) -> DatasetStats:
    """Distinct users, distinct content objects, interactions and sparsity.

    Content objects are all non-user vertices. With a registry, actors of
    object-object relations count as objects rather than users.
    """
    if not records:
        raise DataError("no interaction records")
    src = {name: d.source_tag for name, d in registry.definitions.items()} if registry else {}
    users, objects = set(), set()
    for rec in records:
        actor_tag = src.get(rec.interaction, user_tag)
        if actor_tag == user_tag:
            users.add(rec.user_id)
        else:
            objects.add((actor_tag, rec.user_id))
        if rec.object_tag != user_tag:
            objects.add((rec.object_tag, rec.object_id))
    n = len(records)
    denom = len(users) * len(objects)
    sparsity = 1.0 - n / denom if denom else float("nan")
    per_type = dict(sorted(Counter(r.interaction for r in records).items()))
    return DatasetStats(len(users), len(objects), n, sparsity, per_type)


def split_stats(split: EvalSplit, target_interaction: str, total: int | None = None) -> list[dict]:
    """Per-interaction counts with the target type broken out by partition.

    Shares are relative to ``total`` (default: training records plus
    held-out target items), mirroring a per-split dataset table.
    """
    train_counts = Counter(r.interaction for r in split.validation_train)
    n_val = sum(len(c.items) for c in split.validation)
    n_test = sum(len(c.items) for c in split.test)
    full_counts = Counter(r.interaction for r in split.train)
    if total is None:
        total = len(split.train) + n_test
    rows = [
        {"interaction": target_interaction, "partition": "train", "count": train_counts[target_interaction]},
        {"interaction": target_interaction, "partition": "validation", "count": n_val},
        {"interaction": target_interaction, "partition": "test", "count": n_test},
    ]
    for name in sorted(full_counts):
        if name != target_interaction:
            rows.append({"interaction": name, "partition": "all", "count": full_counts[name]})
    for row in rows:
        row["share"] = row["count"] / total if total else 0.0
    return rows
