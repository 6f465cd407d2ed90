"""Window pair extraction, pair classification, and D+ co-occurrence counts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from .kinds import EntityKind, PairSet, WalkKind
from .walker import Walk

RatingLookup = Callable[[int, int], Optional[float]]


@dataclass(frozen=True)
class ClassifiedPair:
    a: int
    b: int
    set: PairSet
    rating: float | None = None


def window_pairs(nodes: Sequence[int], window: int) -> Iterator[tuple[int, int]]:
    """(target, neighbor) pairs, target-major then neighbor position; self-pairs skipped."""
    if window < 1:
        raise ValueError(f"window radius must be >= 1, got {window}")
    n = len(nodes)
    for t in range(n):
        a = nodes[t]
        for j in range(max(0, t - window), min(n, t + window + 1)):
            if j != t and nodes[j] != a:
                yield a, nodes[j]


def extract_pairs(walk: Walk, window: int, rating_lookup: RatingLookup,
                  node_kind: Sequence[int]) -> list[ClassifiedPair]:
    """Classify every window pair of ``walk`` into R, PLUS or MINUS.

    ``rating_lookup(user, item)`` returns the observed rating or None.
    Unweighted walks keep only R pairs; positive walks send the rest to
    PLUS; negative walks send unrated user/item pairs to MINUS and
    same-kind pairs to PLUS.
    """
    out = []
    for a, b in window_pairs(walk.nodes, window):
        ka, kb = node_kind[a], node_kind[b]
        if ka != kb:
            u, i = (a, b) if ka == EntityKind.USER else (b, a)
            r = rating_lookup(u, i)
            if r is not None:
                out.append(ClassifiedPair(a, b, PairSet.R, r))
                continue
        if walk.kind is WalkKind.UNWEIGHTED:
            continue
        if walk.kind is WalkKind.NEGATIVE and ka != kb:
            out.append(ClassifiedPair(a, b, PairSet.MINUS))
        else:
            out.append(ClassifiedPair(a, b, PairSet.PLUS))
    return out


def pair_key(v: int, w: int) -> int:
    if v > w:
        v, w = w, v
    return (v << 32) | w


@dataclass
class CoocCounts:
    """Unordered pair counts over D+ plus per-entity totals.

    ``keys`` are canonical ``low << 32 | high`` codes, sorted ascending.
    """

    n_entities: int
    keys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint64))
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.keys = np.asarray(self.keys, dtype=np.uint64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self._totals = None
        self._adj = None

    @classmethod
    def from_counter(cls, counter, n_entities: int) -> "CoocCounts":
        keys, counts = counter.items()
        return cls(n_entities, keys, counts)

    @classmethod
    def from_dict(cls, pairs: dict[tuple[int, int], int], n_entities: int) -> "CoocCounts":
        merged: dict[int, int] = {}
        for (v, w), c in pairs.items():
            k = pair_key(v, w)
            merged[k] = merged.get(k, 0) + c
        keys = np.array(sorted(merged), dtype=np.uint64)
        return cls(n_entities, keys, np.array([merged[k] for k in keys.tolist()], dtype=np.int64))

    def __len__(self) -> int:
        return len(self.keys)

    def __eq__(self, other) -> bool:
        return (isinstance(other, CoocCounts) and self.n_entities == other.n_entities
                and np.array_equal(self.keys, other.keys) and np.array_equal(self.counts, other.counts))

    @property
    def pair_a(self) -> np.ndarray:
        return (self.keys >> np.uint64(32)).astype(np.int64)

    @property
    def pair_b(self) -> np.ndarray:
        return (self.keys & np.uint64(0xFFFFFFFF)).astype(np.int64)

    @property
    def totals(self) -> np.ndarray:
        if self._totals is None:
            t = np.bincount(self.pair_a, weights=self.counts, minlength=self.n_entities)
            t += np.bincount(self.pair_b, weights=self.counts, minlength=self.n_entities)
            self._totals = t.astype(np.int64)
        return self._totals

    def pair_count(self, v: int, w: int) -> int:
        k = np.uint64(pair_key(v, w))
        j = np.searchsorted(self.keys, k)
        if j < len(self.keys) and self.keys[j] == k:
            return int(self.counts[j])
        return 0

    def total(self, v: int) -> int:
        if v < 0 or v >= self.n_entities:
            return 0
        return int(self.totals[v])

    def neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Entities co-occurring with ``v`` and the pair counts, ordered by entity id."""
        if self._adj is None:
            a, b = self.pair_a, self.pair_b
            rows = np.concatenate([a, b])
            cols = np.concatenate([b, a])
            cnt = np.concatenate([self.counts, self.counts])
            order = np.lexsort((cols, rows))
            ptr = np.zeros(self.n_entities + 1, dtype=np.int64)
            np.cumsum(np.bincount(rows, minlength=self.n_entities), out=ptr[1:])
            self._adj = (ptr, cols[order], cnt[order])
        ptr, cols, cnt = self._adj
        if v < 0 or v >= self.n_entities:
            return cols[:0], cnt[:0]
        return cols[ptr[v]:ptr[v + 1]], cnt[ptr[v]:ptr[v + 1]]

    def merge(self, other: "CoocCounts") -> "CoocCounts":
        keys = np.concatenate([self.keys, other.keys])
        counts = np.concatenate([self.counts, other.counts])
        uniq, inv = np.unique(keys, return_inverse=True)
        return CoocCounts(max(self.n_entities, other.n_entities), uniq,
                          np.bincount(inv, weights=counts, minlength=len(uniq)).astype(np.int64))

    def to_dict(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): int(c) for a, b, c in zip(self.pair_a, self.pair_b, self.counts)}


def accumulate_cooccurrence(pairs: Iterable[ClassifiedPair], counts: CoocCounts) -> CoocCounts:
    """Add every PLUS pair to ``counts``; R and MINUS pairs are ignored."""
    tally: dict[tuple[int, int], int] = {}
    n = counts.n_entities
    for p in pairs:
        if p.set is not PairSet.PLUS:
            continue
        key = (p.a, p.b) if p.a < p.b else (p.b, p.a)
        tally[key] = tally.get(key, 0) + 1
        n = max(n, key[1] + 1)
    if not tally:
        return counts
    return counts.merge(CoocCounts.from_dict(tally, n))
