"""Weighted undirected user/item graph and per-kind transition tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingest import EntityIndex, RatingRecord, SocialEdge
from .kinds import EntityKind, LinkKind, WalkKind

# nodes above this degree get compensated cumulative sums
_KAHAN_DEGREE = 10_000


@dataclass
class UnifiedGraph:
    """CSR adjacency. Neighbors of each node are sorted by entity id.

    ``weights`` hold the rating for score links and ``c`` for social links.
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    link_kind: np.ndarray
    node_kind: np.ndarray
    min_r: float
    max_r: float
    c: float
    _tables: dict = field(default_factory=dict, repr=False, compare=False)
    _score: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int):
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.indices[lo:hi], self.weights[lo:hi], self.link_kind[lo:hi]

    def edges(self):
        """Yield each undirected edge once as ``(v, w, weight, link_kind)`` with v < w."""
        for v in range(self.n_nodes):
            idx, wts, lks = self.neighbors(v)
            for w, wt, lk in zip(idx.tolist(), wts.tolist(), lks.tolist()):
                if v < w:
                    yield v, w, wt, LinkKind(lk)

    def score_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Score links only, per node sorted by neighbor; used for O(log deg) rating lookup."""
        if self._score is None:
            mask = self.link_kind == LinkKind.SCORE
            rows = np.repeat(np.arange(self.n_nodes), self.degree())
            counts = np.bincount(rows[mask], minlength=self.n_nodes)
            sp = np.zeros(self.n_nodes + 1, dtype=np.int64)
            np.cumsum(counts, out=sp[1:])
            self._score = (sp, self.indices[mask].copy(), self.weights[mask].copy())
        return self._score

    def rating(self, u: int, i: int) -> float | None:
        sp, si, sv = self.score_csr()
        lo, hi = sp[u], sp[u + 1]
        k = lo + np.searchsorted(si[lo:hi], i)
        if k < hi and si[k] == i:
            return float(sv[k])
        return None

    def table(self, kind) -> "TransitionTable":
        kind = WalkKind.parse(kind)
        if kind not in self._tables:
            self._tables[kind] = transition_table(self, kind)
        return self._tables[kind]


def build_unified_graph(ratings: Sequence[RatingRecord], social: Sequence[SocialEdge], c: float,
                        index: EntityIndex, min_r: float | None = None,
                        max_r: float | None = None) -> UnifiedGraph:
    """One score edge per rating (weight = rating) and one social edge per pair (weight = c).

    ``min_r``/``max_r`` default to the observed rating range.
    """
    if not c > 0:
        raise ValueError(f"social weight c must be > 0, got {c}")
    n = len(index)
    src, dst, wts, lks = [], [], [], []
    for r in ratings:
        u = index.user(r.user)
        i = index.item(r.item)
        src.append(u); dst.append(i); wts.append(r.value); lks.append(LinkKind.SCORE)
    for e in social:
        a = index.user(e.a)
        b = index.user(e.b)
        src.append(a); dst.append(b); wts.append(c); lks.append(LinkKind.SOCIAL)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    wts = np.asarray(wts, dtype=np.float64)
    lks = np.asarray(lks, dtype=np.uint8)

    # mirror every edge, then sort by (row, col)
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    w2 = np.concatenate([wts, wts])[order]
    k2 = np.concatenate([lks, lks])[order]
    dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
    if dup.any():
        j = int(np.flatnonzero(dup)[0])
        raise ValueError(f"duplicate edge between entities {rows[j]} and {cols[j]}")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])

    values = [r.value for r in ratings]
    if min_r is None:
        min_r = min(values) if values else 0.0
    if max_r is None:
        max_r = max(values) if values else 0.0
    return UnifiedGraph(indptr, cols, w2, k2, index.kind_array.copy(), float(min_r), float(max_r), float(c))


@dataclass
class TransitionTable:
    """Per-node cumulative weights over the CSR neighbor order."""

    kind: WalkKind
    indptr: np.ndarray
    indices: np.ndarray
    cum: np.ndarray

    def probabilities(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[v], self.indptr[v + 1]
        c = self.cum[lo:hi]
        w = np.diff(c, prepend=0.0)
        return self.indices[lo:hi], w / c[-1]


def _kahan_cumsum(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    s = 0.0
    comp = 0.0
    for k, v in enumerate(x.tolist()):
        y = v - comp
        t = s + y
        comp = (t - s) - y
        s = t
        out[k] = s
    return out


def raw_weights(graph: UnifiedGraph, kind) -> np.ndarray:
    """Unnormalized transition weights per CSR slot for a walk kind."""
    kind = WalkKind.parse(kind)
    if kind is WalkKind.POSITIVE:
        return graph.weights.copy()
    if kind is WalkKind.UNWEIGHTED:
        return np.ones_like(graph.weights)
    score = graph.link_kind == LinkKind.SCORE
    return np.where(score, graph.min_r + graph.max_r - graph.weights, graph.weights)


def transition_table(graph: UnifiedGraph, kind) -> TransitionTable:
    kind = WalkKind.parse(kind)
    if graph.n_nodes == 0:
        raise ValueError("graph is empty")
    w = raw_weights(graph, kind)
    if (w < 0).any():
        raise ValueError(f"negative transition weight for {kind.name} walk; ratings outside [minR, maxR]?")
    cum = np.empty_like(w)
    ip = graph.indptr
    for v in range(graph.n_nodes):
        lo, hi = ip[v], ip[v + 1]
        if lo == hi:
            continue
        seg = w[lo:hi]
        if not seg.sum() > 0:
            # all complement weights zero: uniform fallback
            seg = np.ones_like(seg)
        cum[lo:hi] = _kahan_cumsum(seg) if hi - lo > _KAHAN_DEGREE else np.cumsum(seg)
    return TransitionTable(kind, graph.indptr, graph.indices, cum)
