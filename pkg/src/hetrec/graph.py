"""Typed directed interaction graph.

Users and content objects become vertices; every logged interaction becomes
an outgoing edge from the actor and, for two-way interactions, an ingoing edge
back to it. Edges on the same ordered vertex pair are merged into a single
edge whose type lists every constituent (interaction, direction); its weight
is the sum of the constituent weights.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError


class Direction(str, Enum):
    OUT = "out"
    IN = "in"


Part = tuple[str, Direction]


@dataclass(frozen=True, order=True)
class EdgeType:
    """An interaction/direction pair, or a canonical sorted set of them."""

    parts: tuple[Part, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("edge type needs at least one constituent")
        if tuple(sorted(set(self.parts))) != self.parts:
            raise ValueError(f"edge type parts must be sorted and distinct: {self.parts}")

    @classmethod
    def single(cls, interaction: str, direction: Direction | str) -> EdgeType:
        return cls(((interaction, Direction(direction)),))

    @classmethod
    def combine(cls, parts: Iterable[Part]) -> EdgeType:
        return cls(tuple(sorted({(name, Direction(d)) for name, d in parts})))

    @classmethod
    def parse(cls, key: str) -> EdgeType:
        parts = []
        for chunk in key.split("+"):
            name, sep, direction = chunk.rpartition(":")
            if not sep or not name:
                raise ValueError(f"bad edge type key {key!r}")
            parts.append((name, Direction(direction)))
        return cls.combine(parts)

    @property
    def is_composite(self) -> bool:
        return len(self.parts) > 1

    @property
    def interactions(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.parts)

    @property
    def interaction(self) -> str:
        if self.is_composite:
            raise AttributeError("composite edge type has no single interaction")
        return self.parts[0][0]

    @property
    def direction(self) -> Direction | None:
        """Shared direction of all parts, or None when they are mixed."""
        directions = {d for _, d in self.parts}
        return directions.pop() if len(directions) == 1 else None

    @property
    def key(self) -> str:
        return "+".join(f"{name}:{d.value}" for name, d in self.parts)

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class InteractionDef:
    name: str
    source_tag: str
    target_tag: str
    symmetric: bool = True


class EdgeTypeRegistry:
    """The registered vertex tags and the singleton edge types they admit."""

    def __init__(self, tags: Iterable[str], definitions: Iterable[InteractionDef]):
        self.tags: tuple[str, ...] = tuple(sorted(set(tags)))
        self.definitions: dict[str, InteractionDef] = {d.name: d for d in definitions}
        types = []
        for d in self.definitions.values():
            types.append(EdgeType.single(d.name, Direction.OUT))
            if d.symmetric:
                types.append(EdgeType.single(d.name, Direction.IN))
        self.edge_types: tuple[EdgeType, ...] = tuple(sorted(types))
        self._parts = frozenset(t.parts[0] for t in self.edge_types)

    def __len__(self) -> int:
        return len(self.edge_types)

    def __iter__(self) -> Iterator[EdgeType]:
        return iter(self.edge_types)

    def __contains__(self, item) -> bool:
        if isinstance(item, EdgeType):
            return all(p in self._parts for p in item.parts)
        return item in self._parts

    def __repr__(self) -> str:
        return f"EdgeTypeRegistry({len(self.definitions)} interactions, {len(self)} edge types)"

    @property
    def interactions(self) -> tuple[str, ...]:
        return tuple(sorted(self.definitions))

    def definition(self, name: str) -> InteractionDef:
        try:
            return self.definitions[name]
        except KeyError:
            raise DataError(f"interaction {name!r} is not registered in the schema") from None

    def has(self, interaction: str, direction: Direction) -> bool:
        return (interaction, direction) in self._parts


def register_schema(
    definitions: Sequence[InteractionDef | Mapping], tags: Iterable[str] | None = None
) -> EdgeTypeRegistry:
    """Build the edge-type registry from interaction definitions.

    Mappings are accepted with keys ``name``, ``source``, ``target`` and
    optional ``symmetric`` (default true). When ``tags`` is given every
    referenced tag must appear in it.
    """
    defs = []
    for d in definitions:
        if isinstance(d, Mapping):
            try:
                d = InteractionDef(
                    name=d["name"],
                    source_tag=d["source"],
                    target_tag=d["target"],
                    symmetric=bool(d.get("symmetric", True)),
                )
            except KeyError as exc:
                raise ConfigError(f"interaction definition missing field {exc}") from None
        defs.append(d)

    names = [d.name for d in defs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"duplicate interaction names: {', '.join(dupes)}")
    for d in defs:
        if not d.name or not d.source_tag or not d.target_tag:
            raise ConfigError(f"interaction definition has an empty name or tag: {d}")
        if ":" in d.name or "+" in d.name:
            raise ConfigError(f"interaction name {d.name!r} may not contain ':' or '+'")

    referenced = {d.source_tag for d in defs} | {d.target_tag for d in defs}
    if tags is None:
        tags = referenced
    else:
        tags = list(tags)
        if any(not t for t in tags):
            raise ConfigError("vertex tags must be non-empty")
        if len(set(tags)) != len(tags):
            raise ConfigError("duplicate vertex tag")
        unknown = referenced - set(tags)
        if unknown:
            raise ConfigError(f"unknown tag reference: {', '.join(sorted(unknown))}")
    return EdgeTypeRegistry(tags, defs)


class WeightVector(Mapping):
    """Positive weight per singleton edge type, keyed by (interaction, direction)."""

    def __init__(self, weights: Mapping):
        self._w: dict[Part, float] = {}
        for key, value in weights.items():
            part = _as_part(key)
            value = float(value)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"weight for {part[0]}:{part[1].value} must be > 0, got {value}")
            self._w[part] = value

    @classmethod
    def uniform(cls, registry: EdgeTypeRegistry, value: float = 1.0) -> WeightVector:
        return cls({t.parts[0]: value for t in registry})

    def __getitem__(self, key) -> float:
        return self._w[_as_part(key)]

    def __iter__(self):
        return iter(sorted(self._w))

    def __len__(self) -> int:
        return len(self._w)

    def __repr__(self) -> str:
        return f"WeightVector({self.as_dict()})"

    def resolve(self, edge_type: EdgeType) -> float:
        return resolve_weight(edge_type, self)

    def scaled(self, factor: float) -> WeightVector:
        return WeightVector({k: v * factor for k, v in self._w.items()})

    def as_dict(self) -> dict[str, float]:
        return {f"{name}:{d.value}": self._w[(name, d)] for name, d in self}


def _as_part(key) -> Part:
    if isinstance(key, EdgeType):
        if key.is_composite:
            raise KeyError("composite edge types are resolved, not looked up")
        return key.parts[0]
    if isinstance(key, str):
        return EdgeType.parse(key).parts[0]
    name, direction = key
    return name, Direction(direction)


def resolve_weight(edge_type: EdgeType, weights: Mapping) -> float:
    """Weight of an edge type; composite types sum their constituents."""
    total = 0.0
    for part in edge_type.parts:
        try:
            total += weights[part]
        except KeyError:
            raise ConfigError(f"no weight for edge type {part[0]}:{part[1].value}") from None
    return total


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    user_id: str
    object_id: str
    object_tag: str
    interaction: str
    timestamp: datetime
    # None defers to the schema; False suppresses the ingoing edge
    symmetric: bool | None = None


@dataclass(frozen=True, slots=True)
class Vertex:
    id: str
    tag: str
    index: int

    @property
    def label(self) -> str:
        return f"{self.tag}/{self.id}"


@dataclass(frozen=True, slots=True)
class Edge:
    source: int
    target: int
    edge_type: EdgeType


@dataclass(eq=False)
class HeterogeneousGraph:
    """Immutable typed graph with edges stored in CSR order (by source, then target)."""

    registry: EdgeTypeRegistry
    vertices: tuple[Vertex, ...]
    edge_types: tuple[EdgeType, ...]
    edge_source: np.ndarray
    edge_target: np.ndarray
    edge_type_index: np.ndarray
    indptr: np.ndarray = field(init=False, repr=False)
    tag_index: dict[str, np.ndarray] = field(init=False, repr=False)
    _lookup: dict[tuple[str, str], int] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.vertices)
        counts = np.bincount(self.edge_source, minlength=n)
        self.indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self._lookup = {(v.tag, v.id): v.index for v in self.vertices}
        by_tag: dict[str, list[int]] = defaultdict(list)
        for v in self.vertices:
            by_tag[v.tag].append(v.index)
        self.tag_index = {t: np.asarray(ix, dtype=np.int64) for t, ix in by_tag.items()}
        for arr in (self.edge_source, self.edge_target, self.edge_type_index, self.indptr):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edge_source)

    def index_of(self, tag: str, vertex_id: str) -> int:
        try:
            return self._lookup[(tag, vertex_id)]
        except KeyError:
            raise KeyError(f"{tag}/{vertex_id}") from None

    def get_index(self, tag: str, vertex_id: str) -> int | None:
        return self._lookup.get((tag, vertex_id))

    def vertices_with_tag(self, tag: str) -> np.ndarray:
        return self.tag_index.get(tag, np.empty(0, dtype=np.int64))

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.edge_target[self.indptr[i] : self.indptr[i + 1]]

    def out_edges(self, i: int) -> list[tuple[int, EdgeType]]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [
            (int(t), self.edge_types[k])
            for t, k in zip(self.edge_target[lo:hi], self.edge_type_index[lo:hi])
        ]

    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.edge_target, minlength=self.n_vertices)

    def edges(self) -> Iterator[Edge]:
        for s, t, k in zip(self.edge_source, self.edge_target, self.edge_type_index):
            yield Edge(int(s), int(t), self.edge_types[k])

    def interacted(
        self, i: int, interactions: Iterable[str] | None = None, tag: str | None = None
    ) -> set[int]:
        """Targets of vertex ``i``'s outgoing edges that carry an OUT part.

        Restricted to the given interactions and target tag when provided.
        """
        wanted = None if interactions is None else set(interactions)
        found = set()
        for target, et in self.out_edges(i):
            if tag is not None and self.vertices[target].tag != tag:
                continue
            for name, d in et.parts:
                if d is Direction.OUT and (wanted is None or name in wanted):
                    found.add(target)
                    break
        return found

    def dump(self) -> str:
        """Canonical line-oriented serialization, one sorted line per edge."""
        lines = sorted(
            f"edge {self.vertices[e.source].label} {self.vertices[e.target].label} {e.edge_type.key}"
            for e in self.edges()
        )
        return "".join(line + "\n" for line in lines)


def build_graph(records: Iterable[InteractionRecord], registry: EdgeTypeRegistry) -> HeterogeneousGraph:
    pairs: dict[tuple[tuple[str, str], tuple[str, str]], set[Part]] = defaultdict(set)
    for row, rec in enumerate(records, start=1):
        d = registry.definition(rec.interaction)
        if rec.object_tag != d.target_tag:
            raise DataError(
                f"record {row}: interaction {rec.interaction!r} targets tag "
                f"{d.target_tag!r}, got {rec.object_tag!r}"
            )
        src = (d.source_tag, rec.user_id)
        dst = (rec.object_tag, rec.object_id)
        if src == dst:
            raise DataError(f"record {row}: self-loop on {src[0]}/{src[1]}")
        pairs[(src, dst)].add((rec.interaction, Direction.OUT))
        if rec.symmetric is False:
            continue
        if registry.has(rec.interaction, Direction.IN):
            pairs[(dst, src)].add((rec.interaction, Direction.IN))
        elif rec.symmetric:
            raise DataError(
                f"record {row}: asks for a reverse edge but {rec.interaction!r} is one-way"
            )

    keys = sorted({k for pair in pairs for k in pair})
    vertices = tuple(Vertex(id=vid, tag=tag, index=i) for i, (tag, vid) in enumerate(keys))
    index = {k: i for i, k in enumerate(keys)}

    typed = sorted(
        (index[src], index[dst], EdgeType.combine(parts)) for (src, dst), parts in pairs.items()
    )
    edge_types = tuple(sorted({et for _, _, et in typed}))
    type_index = {et: k for k, et in enumerate(edge_types)}
    m = len(typed)
    return HeterogeneousGraph(
        registry=registry,
        vertices=vertices,
        edge_types=edge_types,
        edge_source=np.fromiter((s for s, _, _ in typed), dtype=np.int64, count=m),
        edge_target=np.fromiter((t for _, t, _ in typed), dtype=np.int64, count=m),
        edge_type_index=np.fromiter((type_index[et] for _, _, et in typed), dtype=np.int64, count=m),
    )
