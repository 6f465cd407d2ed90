import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uniwalk.graph import build_unified_graph, transition_table
from uniwalk.ingest import EntityIndex, RatingRecord, SocialEdge
from uniwalk.kinds import EntityKind, LinkKind, WalkKind


def _graph(rows, social=(), c=5.0, min_r=None, max_r=None):
    recs = [RatingRecord(u, i, float(r)) for u, i, r in rows]
    soc = [SocialEdge.of(a, b) for a, b in social]
    idx = EntityIndex.build(recs, soc)
    return build_unified_graph(recs, soc, c, idx, min_r, max_r), idx


def test_single_rating_and_friend():
    g, idx = _graph([("u1", "i1", 4.0)], [("u1", "u2")])
    assert g.n_nodes == 3 and g.n_edges == 2
    u1, u2, i1 = idx.user("u1"), idx.user("u2"), idx.item("i1")
    edges = {(v, w): (wt, lk) for v, w, wt, lk in g.edges()}
    assert edges[(min(u1, i1), max(u1, i1))] == (4.0, LinkKind.SCORE)
    assert edges[(min(u1, u2), max(u1, u2))] == (5.0, LinkKind.SOCIAL)


def test_ratings_only_is_bipartite():
    g, idx = _graph([("a", "x", 1), ("b", "x", 2), ("b", "y", 3)])
    assert not (g.link_kind == LinkKind.SOCIAL).any()
    for v, w, _, _ in g.edges():
        assert g.node_kind[v] != g.node_kind[w]


def test_bad_c_and_duplicates():
    with pytest.raises(ValueError):
        _graph([("a", "x", 1)], c=0.0)
    recs = [RatingRecord("a", "x", 1.0), RatingRecord("a", "x", 2.0)]
    with pytest.raises(ValueError):
        build_unified_graph(recs, [], 5.0, EntityIndex.build(recs))


def test_transition_examples():
    # v has score neighbours w1 (r=1) and w2 (r=3) on a 1..5 scale
    g, idx = _graph([("v", "w1", 1), ("v", "w2", 3)], min_r=1.0, max_r=5.0)
    v, w1, w2 = idx.user("v"), idx.item("w1"), idx.item("w2")
    expected = {WalkKind.POSITIVE: {w1: 0.25, w2: 0.75},
                WalkKind.NEGATIVE: {w1: 0.625, w2: 0.375},
                WalkKind.UNWEIGHTED: {w1: 0.5, w2: 0.5}}
    for kind, probs in expected.items():
        nb, p = transition_table(g, kind).probabilities(v)
        assert dict(zip(nb.tolist(), p.tolist())) == pytest.approx(probs, abs=1e-15)


def test_negative_keeps_social_weight():
    g, idx = _graph([("u", "x", 5)], [("u", "f")], c=2.0, min_r=1.0, max_r=5.0)
    nb, p = g.table("negative").probabilities(idx.user("u"))
    got = dict(zip(nb.tolist(), p.tolist()))
    # complement of the top rating is 1, friend keeps c=2
    assert got[idx.item("x")] == pytest.approx(1 / 3)
    assert got[idx.user("f")] == pytest.approx(2 / 3)


def test_negative_degenerate_node_uniform():
    # complement minR+maxR-r is zero for every incident edge
    g, idx = _graph([("u", "x", 0.0), ("u", "y", 0.0)], min_r=0.0, max_r=0.0)
    nb, p = g.table(WalkKind.NEGATIVE).probabilities(idx.user("u"))
    assert p.tolist() == [0.5, 0.5]


def test_table_cached():
    g, _ = _graph([("a", "x", 1)])
    assert g.table("positive") is g.table(WalkKind.POSITIVE)


def test_score_csr_and_rating_lookup():
    g, idx = _graph([("a", "x", 1), ("b", "x", 2), ("b", "y", 3)], [("a", "b")])
    assert g.rating(idx.user("b"), idx.item("y")) == 3.0
    assert g.rating(idx.user("a"), idx.item("y")) is None
    sp, si, sv = g.score_csr()
    assert sp[-1] == 6  # score links only, mirrored


def test_equal_weights_all_kinds_coincide():
    # ratings at the midpoint and equal social weight: all kinds uniform
    g, _ = _graph([("a", "x", 3), ("a", "y", 3), ("b", "x", 3)], [("a", "b")], c=3.0, min_r=1.0, max_r=5.0)
    ref = transition_table(g, WalkKind.UNWEIGHTED)
    for kind in (WalkKind.POSITIVE, WalkKind.NEGATIVE):
        t = transition_table(g, kind)
        for v in range(g.n_nodes):
            assert np.allclose(t.probabilities(v)[1], ref.probabilities(v)[1], rtol=0, atol=1e-15)


def test_kahan_large_degree():
    rows = [("hub", f"i{k}", 1 + (k % 5)) for k in range(10_050)]
    g, idx = _graph(rows, min_r=1.0, max_r=5.0)
    nb, p = g.table("positive").probabilities(idx.user("hub"))
    assert abs(p.sum() - 1.0) < 1e-9
    assert len(nb) == 10_050


@st.composite
def small_graphs(draw):
    n_users = draw(st.integers(1, 5))
    n_items = draw(st.integers(1, 5))
    pairs = draw(st.sets(st.tuples(st.integers(0, n_users - 1), st.integers(0, n_items - 1)), min_size=1, max_size=12))
    vals = draw(st.lists(st.sampled_from([0.5, 1.0, 2.0, 3.0, 4.0]), min_size=len(pairs), max_size=len(pairs)))
    social = draw(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=6))
    rows = [(f"u{u}", f"i{i}", v) for (u, i), v in zip(sorted(pairs), vals)]
    soc = sorted({(f"u{min(a, b)}", f"u{max(a, b)}") for a, b in social if a != b})
    c = draw(st.sampled_from([0.5, 1.0, 5.0]))
    return rows, soc, c


@settings(max_examples=80, deadline=None)
@given(small_graphs())
def test_graph_invariants(spec):
    rows, soc, c = spec
    g, idx = _graph(rows, soc, c)
    # mirror check
    adj = {}
    for v in range(g.n_nodes):
        nb, wt, lk = g.neighbors(v)
        assert (np.diff(nb) > 0).all()
        for w, x, k in zip(nb.tolist(), wt.tolist(), lk.tolist()):
            adj[(v, w)] = (x, k)
    for (v, w), val in adj.items():
        assert adj[(w, v)] == val
        kv, kw = g.node_kind[v], g.node_kind[w]
        if val[1] == LinkKind.SCORE:
            assert {kv, kw} == {EntityKind.USER, EntityKind.ITEM}
        else:
            assert kv == kw == EntityKind.USER and val[0] == c
    assert (g.degree() >= 1).all()
    for kind in WalkKind:
        t = g.table(kind)
        for v in range(g.n_nodes):
            _, p = t.probabilities(v)
            assert (p >= 0).all() and abs(p.sum() - 1.0) < 1e-9
