"""Rating / trust file parsing, entity indexing, dataset statistics and CV folds."""

from __future__ import annotations

import io
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import DuplicateRatingError, ParseError
from .kinds import EntityKind

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RatingRecord:
    user: str
    item: str
    value: float


@dataclass(frozen=True)
class SocialEdge:
    """Undirected friendship stored canonically with ``a < b``."""

    a: str
    b: str

    @classmethod
    def of(cls, x: str, y: str) -> "SocialEdge":
        if x == y:
            raise ValueError(f"self-loop on {x!r}")
        return cls(x, y) if x < y else cls(y, x)


@dataclass(frozen=True)
class DatasetStats:
    min_r: float
    max_r: float
    mu: float
    count_ratings: int
    count_users: int
    count_items: int
    count_social_edges: int = 0

    @classmethod
    def from_ratings(cls, ratings: Sequence[RatingRecord], social: Sequence[SocialEdge] = ()) -> "DatasetStats":
        if not ratings:
            raise ValueError("cannot compute statistics of an empty rating list")
        values = [r.value for r in ratings]
        return cls(
            min_r=min(values),
            max_r=max(values),
            mu=math.fsum(values) / len(values),
            count_ratings=len(values),
            count_users=len({r.user for r in ratings}),
            count_items=len({r.item for r in ratings}),
            count_social_edges=len(social),
        )


@dataclass
class ParseReport:
    self_loops: int = 0
    duplicate_edges: int = 0


def _open_text(source) -> TextIO:
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline=None)
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source
    raise TypeError(f"expected a path or text stream, got {type(source).__name__}")


def _iter_fields(stream: Iterable[str], delimiter: str | None):
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if delimiter is None:
            fields = stripped.split()
        else:
            fields = [f.strip() for f in stripped.split(delimiter)]
        yield lineno, line, fields


def parse_ratings(source, delimiter: str | None = None) -> tuple[list[RatingRecord], DatasetStats]:
    """Parse ``user item rating`` lines.

    ``delimiter=None`` splits on runs of whitespace; otherwise a single
    character. Blank lines and ``#`` comments are skipped. Raises
    :class:`ParseError` on malformed lines and :class:`DuplicateRatingError`
    when a (user, item) pair repeats.
    """
    if delimiter is not None and len(delimiter) != 1:
        raise ValueError("delimiter must be a single character")
    stream = _open_text(source)
    records: list[RatingRecord] = []
    seen: dict[tuple[str, str], int] = {}
    try:
        for lineno, line, fields in _iter_fields(stream, delimiter):
            if len(fields) < 3 or not fields[0] or not fields[1]:
                raise ParseError("expected at least 3 fields: user, item, rating", lineno, line)
            try:
                value = float(fields[2])
            except ValueError:
                raise ParseError(f"non-numeric rating {fields[2]!r}", lineno, line) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite rating {fields[2]!r}", lineno, line)
            key = (fields[0], fields[1])
            if key in seen:
                raise DuplicateRatingError(
                    f"duplicate rating for user {key[0]!r} item {key[1]!r} (first on line {seen[key]})",
                    lineno, line)
            seen[key] = lineno
            records.append(RatingRecord(fields[0], fields[1], value))
    finally:
        if stream is not source:
            stream.close()
    if not records:
        raise ParseError("no ratings found", 0, "")
    return records, DatasetStats.from_ratings(records)


def parse_trust(source, delimiter: str | None = None, report: ParseReport | None = None) -> list[SocialEdge]:
    """Parse ``userA userB [weight]`` lines into deduplicated undirected edges.

    Any weight column is ignored. Self-loops are dropped and counted in
    ``report.self_loops``. Output order follows first appearance.
    """
    if delimiter is not None and len(delimiter) != 1:
        raise ValueError("delimiter must be a single character")
    report = report if report is not None else ParseReport()
    stream = _open_text(source)
    edges: dict[SocialEdge, None] = {}
    try:
        for lineno, line, fields in _iter_fields(stream, delimiter):
            if len(fields) < 2 or not fields[0] or not fields[1]:
                raise ParseError("expected at least 2 fields: user-a, user-b", lineno, line)
            a, b = fields[0], fields[1]
            if a == b:
                report.self_loops += 1
                continue
            edge = SocialEdge.of(a, b)
            if edge in edges:
                report.duplicate_edges += 1
            else:
                edges[edge] = None
    finally:
        if stream is not source:
            stream.close()
    if report.self_loops:
        log.warning("dropped %d self-loop trust line(s)", report.self_loops)
    return list(edges)


def format_ratings(ratings: Iterable[RatingRecord], delimiter: str = " ") -> str:
    return "".join(f"{r.user}{delimiter}{r.item}{delimiter}{r.value!r}\n" for r in ratings)


class EntityIndex:
    """Bijection between (external id, kind) and dense entity ids.

    Users take ids ``0..n_users-1`` in first-appearance order, items follow.
    """

    def __init__(self, entries: Sequence[tuple[str, EntityKind]] = ()):
        self._ids: list[str] = []
        self._kinds: list[EntityKind] = []
        self._forward: dict[tuple[str, EntityKind], int] = {}
        for ext, kind in entries:
            self.add(ext, kind)

    @classmethod
    def build(cls, ratings: Sequence[RatingRecord], social: Sequence[SocialEdge] = ()) -> "EntityIndex":
        users: dict[str, None] = {}
        items: dict[str, None] = {}
        for r in ratings:
            users.setdefault(r.user)
            items.setdefault(r.item)
        for e in social:
            users.setdefault(e.a)
            users.setdefault(e.b)
        return cls([(u, EntityKind.USER) for u in users] + [(i, EntityKind.ITEM) for i in items])

    def add(self, ext: str, kind: EntityKind) -> int:
        key = (ext, EntityKind(kind))
        if key in self._forward:
            return self._forward[key]
        eid = len(self._ids)
        self._forward[key] = eid
        self._ids.append(ext)
        self._kinds.append(EntityKind(kind))
        self.__dict__.pop("kind_array", None)
        return eid

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, key) -> bool:
        return key in self._forward

    def get(self, ext: str, kind: EntityKind, default: int = -1) -> int:
        return self._forward.get((ext, kind), default)

    def user(self, ext: str) -> int:
        return self._forward[(ext, EntityKind.USER)]

    def item(self, ext: str) -> int:
        return self._forward[(ext, EntityKind.ITEM)]

    def external(self, eid: int) -> str:
        return self._ids[eid]

    def kind(self, eid: int) -> EntityKind:
        return self._kinds[eid]

    def entries(self) -> list[tuple[str, EntityKind]]:
        return list(zip(self._ids, self._kinds))

    @cached_property
    def kind_array(self) -> np.ndarray:
        return np.asarray([int(k) for k in self._kinds], dtype=np.uint8)

    def ids_of_kind(self, kind: EntityKind) -> np.ndarray:
        return np.flatnonzero(self.kind_array == int(kind))

    def __eq__(self, other) -> bool:
        return isinstance(other, EntityIndex) and self.entries() == other.entries()


@dataclass
class Dataset:
    """Ratings plus social edges with lookup maps used by explanation and eval."""

    ratings: list[RatingRecord]
    social: list[SocialEdge] = field(default_factory=list)

    @cached_property
    def stats(self) -> DatasetStats:
        return DatasetStats.from_ratings(self.ratings, self.social)

    @cached_property
    def by_user(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for r in self.ratings:
            out.setdefault(r.user, {})[r.item] = r.value
        return out

    @cached_property
    def by_item(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for r in self.ratings:
            out.setdefault(r.item, {})[r.user] = r.value
        return out

    @cached_property
    def friends(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for e in self.social:
            out.setdefault(e.a, set()).add(e.b)
            out.setdefault(e.b, set()).add(e.a)
        return out

    def rating(self, user: str, item: str) -> float | None:
        return self.by_user.get(user, {}).get(item)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.ratings[k] for k in indices], self.social)

    @classmethod
    def load(cls, ratings_path, trust_path=None, delimiter: str | None = None) -> "Dataset":
        ratings, _ = parse_ratings(ratings_path, delimiter)
        social = parse_trust(trust_path, delimiter) if trust_path else []
        return cls(ratings, social)


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    assignment: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.fold_count).tolist()


def kfold_split(ratings: Sequence, k: int, seed: int) -> FoldSplit:
    """Uniform random permutation, then round-robin fold assignment."""
    n = len(ratings)
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if n < k:
        raise ValueError(f"need at least {k} ratings for {k} folds, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return FoldSplit(k, assignment, seed)


def holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``range(n)`` into (kept, held-out) index arrays, both sorted."""
    n_hold = int(round(n * fraction))
    if fraction <= 0 or n_hold == 0:
        return np.arange(n), np.zeros(0, dtype=np.int64)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])
