"""Synthetic social rating data with homophilous friendships.

Used by the benchmark and scale tests; the shape defaults mimic a small
movie-rating site (half-star scale 0.5..4.0, heavy-tailed activity).
"""

from __future__ import annotations

import numpy as np

from .ingest import Dataset, RatingRecord, SocialEdge


def make_social_ratings(n_users: int = 1600, n_items: int = 2000, n_ratings: int = 35_000,
                        n_social: int = 1300, dim: int = 5, n_communities: int = 20,
                        noise: float = 0.6, scale: tuple[float, float, float] = (0.5, 4.0, 0.5),
                        seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    lo, hi, step = scale
    community = rng.integers(n_communities, size=n_users)
    centers = rng.normal(0, 1.0, size=(n_communities, dim))
    user_vec = centers[community] + rng.normal(0, 0.5, size=(n_users, dim))
    item_vec = rng.normal(0, 0.35, size=(n_items, dim))
    user_bias = rng.normal(0, 0.35, size=n_users)
    item_bias = rng.normal(0, 0.4, size=n_items)
    mid = (lo + hi) / 2 + 0.5

    user_w = rng.pareto(1.5, size=n_users) + 1
    item_w = rng.pareto(1.2, size=n_items) + 1
    user_p = user_w / user_w.sum()
    item_p = item_w / item_w.sum()

    seen: set[tuple[int, int]] = set()
    ratings: list[RatingRecord] = []
    while len(ratings) < n_ratings:
        need = n_ratings - len(ratings)
        us = rng.choice(n_users, size=need * 2, p=user_p)
        its = rng.choice(n_items, size=need * 2, p=item_p)
        for u, i in zip(us.tolist(), its.tolist()):
            if (u, i) in seen:
                continue
            seen.add((u, i))
            raw = mid + user_bias[u] + item_bias[i] + user_vec[u] @ item_vec[i] + rng.normal(0, noise)
            val = float(np.clip(np.round(raw / step) * step, lo, hi))
            ratings.append(RatingRecord(f"u{u}", f"i{i}", val))
            if len(ratings) == n_ratings:
                break

    edges: dict[SocialEdge, None] = {}
    members = [np.flatnonzero(community == c) for c in range(n_communities)]
    while len(edges) < n_social:
        a = int(rng.integers(n_users))
        if rng.random() < 0.8 and len(members[community[a]]) > 1:
            b = int(rng.choice(members[community[a]]))
        else:
            b = int(rng.integers(n_users))
        if a != b:
            edges.setdefault(SocialEdge.of(f"u{a}", f"u{b}"))
    return Dataset(ratings, list(edges))
