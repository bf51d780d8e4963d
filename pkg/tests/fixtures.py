"""Shared toy data: the social-network example graph and a synthetic generator."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from hetrec.graph import InteractionRecord, register_schema

T0 = datetime(2020, 3, 17, 9, 0, tzinfo=timezone.utc)

EDU_INTERACTIONS = [
    {"name": "follow_course", "source": "user", "target": "course"},
    {"name": "follow_user", "source": "user", "target": "user"},
    {"name": "create_post", "source": "user", "target": "post"},
    {"name": "like_post", "source": "user", "target": "post"},
    {"name": "create_comment", "source": "user", "target": "comment"},
    {"name": "like_comment", "source": "user", "target": "comment"},
    {"name": "comment_under_post", "source": "comment", "target": "post"},
    {"name": "join_university", "source": "user", "target": "university"},
]


def edu_registry():
    return register_schema(EDU_INTERACTIONS)


def rec(user, obj, tag, interaction, minutes=0, symmetric=None):
    return InteractionRecord(user, obj, tag, interaction, T0 + timedelta(minutes=minutes), symmetric)


def toy_records():
    """User 1 follows course 1, user 2 follows course 2, users 1 and 3 follow
    user 2, user 2 created post 1, user 1 commented under it, user 3 liked the
    comment; user 1 also joined university 1."""
    return [
        rec("1", "1", "course", "follow_course", 0),
        rec("2", "2", "course", "follow_course", 1),
        rec("1", "2", "user", "follow_user", 2),
        rec("3", "2", "user", "follow_user", 3),
        rec("2", "1", "post", "create_post", 4),
        rec("1", "1", "comment", "create_comment", 5),
        rec("1", "1", "post", "comment_under_post", 5),
        rec("3", "1", "comment", "like_comment", 6),
        rec("1", "1", "university", "join_university", 7),
    ]


def synthetic_edu(n_users=120, n_courses=30, n_communities=5, seed=0):
    """Community-structured log: users mostly follow courses and users of their own community."""
    rng = np.random.default_rng(seed)
    community = rng.integers(n_communities, size=n_users)
    course_comm = np.arange(n_courses) % n_communities
    records = []
    t = 0
    for u in range(n_users):
        own = np.flatnonzero(course_comm == community[u])
        n_follow = int(rng.integers(1, 5))
        for _ in range(n_follow):
            pool = own if rng.random() < 0.8 else np.arange(n_courses)
            c = int(rng.choice(pool))
            t += int(rng.integers(1, 60))
            records.append(rec(f"u{u}", f"c{c}", "course", "follow_course", t))
        peers = np.flatnonzero(community == community[u])
        for _ in range(int(rng.integers(0, 3))):
            v = int(rng.choice(peers))
            if v != u:
                t += int(rng.integers(1, 60))
                records.append(rec(f"u{u}", f"u{v}", "user", "follow_user", t))
        if rng.random() < 0.3:
            t += int(rng.integers(1, 60))
            records.append(rec(f"u{u}", f"p{u}", "post", "create_post", t))
    # likes on posts from peers
    posts = [r.object_id for r in records if r.interaction == "create_post"]
    for u in range(n_users):
        if posts and rng.random() < 0.4:
            t += int(rng.integers(1, 60))
            records.append(rec(f"u{u}", str(rng.choice(posts)), "post", "like_post", t))
    # shuffle global order, timestamps keep chronology
    order = rng.permutation(len(records))
    return [records[i] for i in order]
