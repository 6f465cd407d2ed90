import sys

import numpy as np
import pytest

from uniwalk.graph import build_unified_graph
from uniwalk.ingest import Dataset, EntityIndex, RatingRecord, SocialEdge


def make_dataset(rows, social=()):
    return Dataset([RatingRecord(u, i, float(r)) for u, i, r in rows],
                   [SocialEdge.of(a, b) for a, b in social])


@pytest.fixture
def six_node():
    """3 users, 3 items: u0-u1 friends, a handful of ratings on a 1..5 scale."""
    data = make_dataset(
        [("u0", "i0", 5), ("u0", "i1", 1), ("u1", "i1", 4), ("u2", "i2", 2), ("u1", "i2", 3)],
        [("u0", "u1")],
    )
    index = EntityIndex.build(data.ratings, data.social)
    graph = build_unified_graph(data.ratings, data.social, 5.0, index, 1.0, 5.0)
    return data, index, graph


@pytest.fixture
def tiny():
    """3 users x 3 items, 6 ratings."""
    return make_dataset([("a", "x", 5), ("a", "y", 3), ("b", "x", 4), ("b", "z", 1),
                         ("c", "y", 2), ("c", "z", 2)], [("a", "b")])


@pytest.fixture
def small_synth():
    from uniwalk.synthetic import make_social_ratings
    return make_social_ratings(n_users=60, n_items=80, n_ratings=700, n_social=60, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in acc.REPORT:
            terminalreporter.write_line(line)
