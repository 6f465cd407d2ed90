"""Fixed-length random walks over the unified graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np

from ._backend import kernels
from ._pykernels import draw_neighbor
from ._rng import SplitMix64, walk_seed
from .graph import TransitionTable, UnifiedGraph
from .kinds import WalkKind

DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class Walk:
    kind: WalkKind
    nodes: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.nodes)


def sample_walk(graph: UnifiedGraph, table: TransitionTable, start: int, length: int, rng) -> Walk:
    """Walk ``length`` nodes from ``start``; ``rng`` is anything exposing ``random()``."""
    if length < 2:
        raise ValueError(f"walk length must be >= 2, got {length}")
    if graph.indptr[start + 1] == graph.indptr[start]:
        raise ValueError(f"start node {start} is isolated")
    nodes = [start]
    v = start
    for _ in range(length - 1):
        v = draw_neighbor(table.indptr, table.indices, table.cum, v, rng.random())
        nodes.append(v)
    return Walk(table.kind, tuple(nodes))


def walk_rng(seed: int, kind, iteration: int, node: int, rep: int) -> SplitMix64:
    """The per-walk generator used by :func:`generate_walks`."""
    return SplitMix64(walk_seed(seed, int(WalkKind.parse(kind)), iteration, node, rep))


def walk_starts(graph: UnifiedGraph, walks_per_node: int) -> tuple[np.ndarray, np.ndarray]:
    """Node-major, repetition-minor start list over nodes of degree >= 1."""
    if walks_per_node < 1:
        raise ValueError(f"walks_per_node must be >= 1, got {walks_per_node}")
    nodes = np.flatnonzero(graph.degree() > 0)
    starts = np.repeat(nodes, walks_per_node)
    reps = np.tile(np.arange(walks_per_node, dtype=np.int64), len(nodes))
    return starts, reps


def walk_chunks(graph: UnifiedGraph, kind, walks_per_node: int, length: int, seed: int,
                iteration: int = 0, chunk: int = DEFAULT_CHUNK, backend=None) -> Iterator[np.ndarray]:
    """Yield ``(n, length)`` int64 arrays of walks in stream order."""
    if length < 2:
        raise ValueError(f"walk length must be >= 2, got {length}")
    kind = WalkKind.parse(kind)
    backend = backend or kernels
    table = graph.table(kind)
    starts, reps = walk_starts(graph, walks_per_node)
    for lo in range(0, len(starts), chunk):
        yield backend.sample_walks(table.indptr, table.indices, table.cum, starts[lo:lo + chunk],
                                   reps[lo:lo + chunk], length, seed, int(kind), iteration)


def generate_walks(graph: UnifiedGraph, kind, walks_per_node: int, length: int, seed: int,
                   iteration: int = 0) -> Iterator[Walk]:
    """``walks_per_node`` walks from every non-isolated node.

    Each walk owns a generator seeded by hash(seed, kind, iteration, node,
    repetition), so the stream is reproducible and independent of chunking.
    """
    kind = WalkKind.parse(kind)
    for block in walk_chunks(graph, kind, walks_per_node, length, seed, iteration):
        for row in block.tolist():
            yield Walk(kind, tuple(row))


def dump_walks(walks, index, out: TextIO) -> None:
    """Debug dump: kind tag followed by space-separated external ids, one walk per line."""
    for w in walks:
        out.write(w.kind.name.lower() + " " + " ".join(index.external(v) for v in w.nodes) + "\n")
