from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import edu_registry, rec
from hetrec.errors import ConfigError, DataError
from hetrec.graph import (
    Direction,
    EdgeType,
    WeightVector,
    build_graph,
    register_schema,
    resolve_weight,
)

OUT, IN = Direction.OUT, Direction.IN


def test_two_way_interaction_registers_both_directions():
    reg = register_schema([{"name": "follow_course", "source": "user", "target": "course"}])
    assert list(reg) == [EdgeType.single("follow_course", IN), EdgeType.single("follow_course", OUT)]


def test_one_way_interaction_registers_out_only():
    reg = register_schema([{"name": "follow_user", "source": "user", "target": "user", "symmetric": False}])
    assert list(reg) == [EdgeType.single("follow_user", OUT)]


def test_empty_schema():
    assert len(register_schema([])) == 0


@pytest.mark.parametrize(
    "defs",
    [
        [{"name": "a", "source": "user", "target": "x"}, {"name": "a", "source": "user", "target": "y"}],
        [{"name": "", "source": "user", "target": "x"}],
        [{"name": "a:b", "source": "user", "target": "x"}],
        [{"name": "a", "source": "", "target": "x"}],
    ],
)
def test_bad_schema_rejected(defs):
    with pytest.raises(ConfigError):
        register_schema(defs)


def test_unknown_tag_rejected():
    with pytest.raises(ConfigError):
        register_schema([{"name": "a", "source": "user", "target": "x"}], tags=["user"])


def test_empty_graph(registry):
    g = build_graph([], registry)
    assert g.n_vertices == 0 and g.n_edges == 0
    assert g.dump() == ""


def test_single_record_two_edges(registry):
    g = build_graph([rec("u1", "c1", "course", "follow_course")], registry)
    assert g.n_vertices == 2
    assert sorted(g.dump().splitlines()) == [
        "edge course/c1 user/u1 follow_course:in",
        "edge user/u1 course/c1 follow_course:out",
    ]


def test_distinct_interactions_merge_into_composite(registry):
    g = build_graph([rec("u", "p", "post", "create_post"), rec("u", "p", "post", "like_post", 5)], registry)
    assert g.n_edges == 2
    u = g.index_of("user", "u")
    [(target, et)] = g.out_edges(u)
    assert g.vertices[target].label == "post/p"
    assert et == EdgeType.combine([("create_post", OUT), ("like_post", OUT)])
    assert et.is_composite
    w = WeightVector({("create_post", OUT): 1.11, ("like_post", OUT): 1.27, ("create_post", IN): 1.0,
                      ("like_post", IN): 1.0})
    assert resolve_weight(et, w) == pytest.approx(2.38, abs=1e-12)


def test_duplicate_interaction_deduplicated(registry):
    g = build_graph([rec("u", "c", "course", "follow_course", 0), rec("u", "c", "course", "follow_course", 9)],
                    registry)
    assert g.n_edges == 2
    [(_, et)] = g.out_edges(g.index_of("user", "u"))
    assert not et.is_composite


def test_resolve_weight_examples():
    et = EdgeType.single("follow_course", OUT)
    assert resolve_weight(et, {("follow_course", OUT): 0.73}) == 0.73
    assert resolve_weight(et, {("follow_course", OUT): 1.0}) == 1.0
    with pytest.raises(ConfigError):
        resolve_weight(et, {("follow_course", IN): 1.0})


def test_edge_type_parse_roundtrip():
    et = EdgeType.combine([("like_post", OUT), ("create_post", OUT)])
    assert et.key == "create_post:out+like_post:out"
    assert EdgeType.parse(et.key) == et
    assert et.direction is OUT


@pytest.mark.parametrize("value", [0.0, -1.0, math.inf, math.nan])
def test_weight_vector_rejects_nonpositive(value):
    with pytest.raises(ConfigError):
        WeightVector({("a", OUT): value})


def test_self_loop_rejected(registry):
    with pytest.raises(DataError):
        build_graph([rec("u1", "u1", "user", "follow_user")], registry)


def test_unregistered_interaction_rejected(registry):
    with pytest.raises(DataError):
        build_graph([rec("u1", "x", "course", "teleport")], registry)


def test_wrong_object_tag_rejected(registry):
    with pytest.raises(DataError):
        build_graph([rec("u1", "c1", "post", "follow_course")], registry)


def test_record_can_suppress_reverse_edge(registry):
    g = build_graph([rec("u1", "u2", "user", "follow_user", symmetric=False)], registry)
    assert g.dump().splitlines() == ["edge user/u1 user/u2 follow_user:out"]


def test_one_way_schema_rejects_symmetric_record():
    reg = register_schema([{"name": "f", "source": "user", "target": "user", "symmetric": False}])
    with pytest.raises(DataError):
        build_graph([rec("a", "b", "user", "f", symmetric=True)], reg)


def test_object_object_relation(registry, toy):
    g = build_graph(toy, registry)
    cm = g.index_of("comment", "1")
    targets = {g.vertices[t].label: et.key for t, et in g.out_edges(cm)}
    assert targets["post/1"] == "comment_under_post:out"
    # content relations are not attributed to any user
    assert g.interacted(cm) == {g.index_of("post", "1")}


def test_toy_shape(registry, toy):
    g = build_graph(toy, registry)
    assert g.n_vertices == 8
    assert g.n_edges == 2 * len(toy)
    assert [v.label for v in g.vertices] == [
        "comment/1", "course/1", "course/2", "post/1", "university/1", "user/1", "user/2", "user/3",
    ]
    assert g.out_degree().sum() == g.in_degree().sum() == g.n_edges


def test_interacted(registry, toy):
    g = build_graph(toy, registry)
    u1 = g.index_of("user", "1")
    labels = lambda idx: sorted(g.vertices[i].label for i in idx)  # noqa: E731
    assert labels(g.interacted(u1, tag="course")) == ["course/1"]
    assert labels(g.interacted(u1, interactions={"follow_user"})) == ["user/2"]
    # user 2 is followed by user 1 but did not act on user 1
    assert labels(g.interacted(g.index_of("user", "2"), tag="user")) == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.sampled_from(["follow_course", "like_post",
                                                                                    "create_post", "follow_user"])),
                max_size=25),
       st.randoms(use_true_random=False))
def test_build_is_order_independent_and_simple(triples, rnd):
    registry = edu_registry()
    tag = {"follow_course": "course", "like_post": "post", "create_post": "post", "follow_user": "user"}
    records = [rec(f"u{u}", f"o{o}" if tag[i] != "user" else f"u{o}", tag[i], i, n)
               for n, (u, o, i) in enumerate(triples) if not (tag[i] == "user" and u == o)]
    g = build_graph(records, registry)
    shuffled = list(records)
    rnd.shuffle(shuffled)
    assert build_graph(shuffled, registry).dump() == g.dump()
    pairs = list(zip(g.edge_source.tolist(), g.edge_target.tolist()))
    assert len(pairs) == len(set(pairs))
    assert all(s != t for s, t in pairs)
    distinct = {(r.user_id, r.object_tag, r.object_id) for r in records}
    # every pair is two-way here, but u->v and v->u follow records share edges
    assert g.n_edges <= 2 * len(distinct)
    if not any(r.interaction == "follow_user" for r in records):
        assert g.n_edges == 2 * len(distinct)


def test_edge_count_rule_on_random_log(registry):
    rnd = random.Random(7)
    seen = set()
    records = []
    for n in range(200):
        u, c = rnd.randrange(40), rnd.randrange(30)
        if (u, c) in seen:
            continue
        seen.add((u, c))
        records.append(rec(f"u{u}", f"c{c}", "course", "follow_course", n))
    assert build_graph(records, registry).n_edges == 2 * len(records)
