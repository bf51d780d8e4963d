from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from fixtures import edu_registry, rec, synthetic_edu
from hetrec.baselines import InteractionMatrixView, cosine, most_popular, ubknn_recommend
from hetrec.graph import register_schema
from hetrec.recommender import ExcludeInteracted, RecommendationRequest

REG = register_schema([
    {"name": "buy", "source": "user", "target": "item"},
    {"name": "view", "source": "user", "target": "item"},
])


def view_of(owned, interaction="buy", catalog=()):
    records = [rec(u, i, "item", interaction, n) for n, (u, items) in enumerate(owned.items()) for i in items]
    return InteractionMatrixView(records, REG, catalog=catalog)


def req(user, k=10, **kw):
    return RecommendationRequest(user, "item", k=k, **kw)


def test_most_popular_sort_and_tie_rule():
    v = view_of({"u1": ["a", "b", "c"], "u2": ["a", "b", "c"], "u3": ["a", "b", "c"], "u4": ["a"], "u5": ["a"]})
    v2 = view_of({f"u{i}": ["a"] for i in range(5)} | {"x1": ["c", "b"], "x2": ["c", "b"], "x3": ["b", "c"]})
    assert most_popular(v2, "item", req("anyone")).ids == ["a", "b", "c"]
    assert [s for _, s in most_popular(v2, "item", req("anyone"))] == [5.0, 3.0, 3.0]
    assert most_popular(v, "item", req("u4", filters=(ExcludeInteracted(),))).ids == ["b", "c"]


def test_most_popular_zero_counts_sort_by_id():
    v = view_of({}, catalog=[("item", "z"), ("item", "m"), ("item", "b")])
    assert most_popular(v, "item", req("u")).ids == ["b", "m", "z"]


def test_popularity_counts_distinct_users():
    records = [rec("u1", "a", "item", "buy", 0), rec("u1", "a", "item", "view", 1), rec("u2", "b", "item", "buy", 2)]
    v = InteractionMatrixView(records, REG)
    assert v.item_counts[("item", "a")] == 1


def test_most_popular_same_for_every_user():
    v = view_of({"u1": ["a", "b"], "u2": ["b"], "u3": ["c"]})
    lists = [most_popular(v, "item", req(u)).ids for u in ["u1", "u2", "nobody"]]
    assert all(lst == lists[0] for lst in lists)


def test_cosine():
    assert cosine({"a", "b"}, {"a", "b"}) == 1.0
    assert cosine({"a"}, {"b"}) == 0.0
    assert cosine(set(), {"a"}) == 0.0
    assert cosine({"a", "b"}, {"a", "c", "d"}) == pytest.approx(1 / math.sqrt(6))


def test_similarity_symmetry_on_random_fixture():
    v = InteractionMatrixView(synthetic_edu(30, 10, seed=2), edu_registry())
    sims = np.array([v.similarities(u) for u in v.users])
    np.testing.assert_allclose(sims, sims.T, atol=1e-12)
    for (i, a), (j, b) in itertools.product(enumerate(v.users[:8]), repeat=2):
        if i != j:
            assert sims[i, j] == pytest.approx(cosine(set(v.user_objects[a]), set(v.user_objects[b])))


def test_identical_user_is_top_neighbour():
    v = view_of({"me": ["a", "b"], "twin": ["a", "b", "z"], "other": ["a", "q"]})
    sims = dict(zip(v.users, v.similarities("me")))
    assert sims["other"] == pytest.approx(0.5)
    v = view_of({"me": ["a", "b"], "twin": ["a", "b"], "other": ["a", "q"]})
    sims = dict(zip(v.users, v.similarities("me")))
    assert sims["twin"] == pytest.approx(1.0)
    assert max((s, u) for u, s in sims.items() if u != "me")[1] == "twin"


def test_ubknn_hand_enumerated():
    # me={a,b}; n1={a,b,c} sim 2/sqrt6; n2={b,d} sim 1/2; n3={c,d,e} sim 0
    v = view_of({"me": ["a", "b"], "n1": ["a", "b", "c"], "n2": ["b", "d"], "n3": ["c", "d", "e"]})
    out = ubknn_recommend(v, "me", 2, req("me", filters=(ExcludeInteracted(),)))
    # c and d each counted once; c has the larger summed similarity
    assert out.ids == ["c", "d"]
    out = ubknn_recommend(v, "me", 1, req("me", filters=(ExcludeInteracted(),)))
    assert out.ids == ["c"]
    # zero-similarity users are never neighbours, so e never appears
    assert "e" not in ubknn_recommend(v, "me", 3, req("me")).ids


def test_ubknn_cold_user_falls_back():
    v = view_of({"u1": ["a"], "u2": ["a", "b"]})
    out = ubknn_recommend(v, "stranger", 5, req("stranger"))
    assert out.ids == ["a", "b"] and "fallback_popular" in out.flags


def test_ubknn_uses_all_interaction_types():
    records = [rec("me", "a", "item", "view", 0), rec("n1", "a", "item", "buy", 1), rec("n1", "b", "item", "buy", 2)]
    v = InteractionMatrixView(records, REG)
    assert ubknn_recommend(v, "me", 5, req("me", filters=(ExcludeInteracted(),))).ids == ["b"]
