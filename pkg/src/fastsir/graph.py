"""Contact networks: loading, synthesis and degree statistics.

A :class:`Network` is an immutable simple undirected graph on dense node ids
``0..N-1``. It is stored in CSR form (``indptr``/``indices``) so the
simulation kernels can walk neighbourhoods without Python overhead, and it
exposes per-node sorted adjacency tuples for everything else.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "Network",
    "DegreeStats",
    "EdgeListParseError",
    "load_edge_list",
    "dump_edge_list",
    "write_remap_csv",
    "degree_stats",
    "generate_m_ary_tree",
    "generate_test_graph",
    "generate_scale_free",
    "validate_network",
    "reachable_from",
]

# node ids are stored in 32-bit containers on disk and in the CDF cache
MAX_NODES = 2**31 - 1


class EdgeListParseError(ValueError):
    """Malformed edge-list input. ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Network:
    """Simple undirected graph in CSR layout.

    Use :meth:`from_edges` rather than the constructor; it normalizes
    self-loops and duplicate edges and sorts every neighbour list.
    """

    indptr: np.ndarray
    indices: np.ndarray
    labels: tuple | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, edges, node_count: int | None = None, labels=None) -> "Network":
        """Build a network from an ``(L, 2)`` array-like of endpoint pairs.

        Self-loops are dropped and multi-edges merged. ``node_count`` may
        exceed the largest endpoint to keep isolated nodes.
        """
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if node_count is None:
            node_count = int(e.max()) + 1 if e.size else 0
        if node_count > MAX_NODES:
            raise ValueError(f"node count {node_count} exceeds {MAX_NODES}")
        if e.size and (e.min() < 0 or e.max() >= node_count):
            raise ValueError("edge endpoint outside [0, node_count)")
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        indices = dst[order]
        counts = np.bincount(src, minlength=node_count)
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        if labels is not None:
            labels = tuple(labels)
            if len(labels) != node_count:
                raise ValueError("labels must have one entry per node")
        return cls(_readonly(indptr), _readonly(indices.astype(np.int64)), labels)

    @property
    def node_count(self) -> int:
        return self.indptr.size - 1

    @property
    def link_count(self) -> int:
        return self.indices.size // 2

    @cached_property
    def degrees(self) -> np.ndarray:
        return _readonly(np.diff(self.indptr))

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        ind = self.indices.tolist()
        ptr = self.indptr.tolist()
        return tuple(tuple(ind[ptr[u]:ptr[u + 1]]) for u in range(self.node_count))

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def edges(self) -> np.ndarray:
        """``(L, 2)`` array of edges with ``u < v``, sorted."""
        src = np.repeat(np.arange(self.node_count), self.degrees)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def max_degree_node(self) -> int:
        """Lowest-indexed node of maximum degree."""
        return int(np.argmax(self.degrees))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.indptr.tobytes(), self.indices.tobytes()))

    def __repr__(self):
        return f"Network(node_count={self.node_count}, link_count={self.link_count})"


@dataclass(frozen=True)
class DegreeStats:
    k_max: int
    mean_degree: float
    distinct_degrees: tuple[int, ...]
    sum_distinct_degrees: int


def degree_stats(net: Network) -> DegreeStats:
    """Degree summary; ``sum_distinct_degrees`` sizes a sparse CDF table."""
    deg = net.degrees
    distinct = tuple(int(d) for d in np.unique(deg))
    mean = 2.0 * net.link_count / net.node_count if net.node_count else 0.0
    return DegreeStats(
        k_max=max(distinct) if distinct else 0,
        mean_degree=mean,
        distinct_degrees=distinct,
        sum_distinct_degrees=sum(distinct),
    )


def load_edge_list(source: TextIO | Iterable[str]) -> Network:
    """Parse a whitespace-separated edge list.

    Lines starting with ``#`` or ``%`` are comments and blank lines are
    skipped. Only the first two columns are read, so weighted or timestamped
    edge lists load as their simple graph. Original ids are remapped to
    dense ids in order of first appearance and kept in ``Network.labels``.
    Self-loop lines are discarded before remapping, so a node seen only in
    self-loops does not become an isolated node.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    remap: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    for lineno, line in enumerate(source, start=1):
        s = line.strip()
        if not s or s[0] in "#%":
            continue
        tokens = s.split()
        if len(tokens) < 2:
            raise EdgeListParseError(f"expected two node ids, got {s!r}", lineno)
        raw = []
        for tok in tokens[:2]:
            try:
                v = int(tok)
            except ValueError:
                raise EdgeListParseError(f"malformed node id {tok!r}", lineno) from None
            if v < 0:
                raise EdgeListParseError(f"negative node id {v}", lineno)
            raw.append(v)
        if raw[0] == raw[1]:
            continue
        pairs.append((remap.setdefault(raw[0], len(remap)), remap.setdefault(raw[1], len(remap))))
    if not pairs:
        raise EdgeListParseError("edge list contains no edges")
    labels = list(remap)
    return Network.from_edges(pairs, node_count=len(remap), labels=labels)


def dump_edge_list(net: Network, sink: TextIO) -> None:
    """Write ``net`` so that :func:`load_edge_list` rebuilds it exactly.

    Edges are ordered so that dense ids reappear in first-appearance order.
    Raises ``ValueError`` for networks that no edge list can reproduce
    (isolated nodes, or an id order no appearance sequence yields).
    """
    adj = net.adjacency
    written: set[tuple[int, int]] = set()
    lines: list[tuple[int, int]] = []
    seen = 0  # ids 0..seen-1 have appeared
    for w in range(net.node_count):
        if w < seen:
            continue
        if not adj[w]:
            raise ValueError(f"node {w} is isolated and cannot be written as an edge")
        lower = adj[w][0]
        if lower < w:
            lines.append((lower, w))
            written.add((lower, w))
            seen = w + 1
        elif w + 1 in adj[w]:
            lines.append((w, w + 1))
            written.add((w, w + 1))
            seen = w + 2
        else:
            raise ValueError(f"node order is not a first-appearance order at node {w}")
    for u, v in net.edges().tolist():
        if (u, v) not in written:
            lines.append((u, v))
    sink.write("".join(f"{u} {v}\n" for u, v in lines))


def write_remap_csv(net: Network, sink: TextIO) -> None:
    """Two-column ``original_id,dense_id`` table for a loaded network."""
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["original_id", "dense_id"])
    labels = net.labels if net.labels is not None else range(net.node_count)
    for dense, orig in enumerate(labels):
        w.writerow([orig, dense])


def validate_network(net: Network) -> None:
    """Raise ``AssertionError`` if any structural invariant is violated."""
    n = net.node_count
    assert net.indptr[0] == 0 and net.indptr[-1] == net.indices.size
    assert np.all(np.diff(net.indptr) >= 0)
    assert net.indices.size % 2 == 0
    if net.indices.size:
        assert net.indices.min() >= 0 and net.indices.max() < n
    adj = net.adjacency
    for u, nbrs in enumerate(adj):
        assert u not in nbrs, f"self-loop at {u}"
        assert all(a < b for a, b in zip(nbrs, nbrs[1:])), f"unsorted or duplicate at {u}"
        for v in nbrs:
            assert u in adj[v], f"asymmetric edge {u}-{v}"
    assert net.link_count * 2 == sum(len(a) for a in adj)


def generate_m_ary_tree(m: int, depth: int) -> Network:
    """Complete ``m``-ary tree with ``depth + 1`` levels, root at node 0.

    Nodes are numbered level by level, so the children of ``u`` are
    ``m*u + 1 .. m*u + m``.
    """
    if m < 1 or depth < 0:
        raise ValueError("need m >= 1 and depth >= 0")
    count = depth + 1 if m == 1 else (m ** (depth + 1) - 1) // (m - 1)
    if count > MAX_NODES:
        raise OverflowError(f"tree with m={m}, depth={depth} has {count} nodes")
    child = np.arange(1, count, dtype=np.int64)
    parent = (child - 1) // m
    return Network.from_edges(np.column_stack([parent, child]), node_count=count)


def generate_test_graph(kind: str, n: int) -> Network:
    """Canonical fixture graphs: ``path``, ``cycle``, ``star`` (centre 0), ``complete``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        if n < 3:
            raise ValueError("a simple cycle needs n >= 3")
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "star":
        edges = [(0, i) for i in range(1, n)]
    elif kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    return Network.from_edges(np.array(edges, dtype=np.int64).reshape(-1, 2), node_count=n)


def generate_scale_free(n: int, exponent: float = 2.5, min_degree: int = 2,
                        max_degree: int | None = None, seed: int = 0) -> Network:
    """Configuration-model graph with a power-law degree sequence.

    Degrees follow ``P(k) ~ k**-exponent`` for ``k >= min_degree``, capped at
    ``max_degree`` (default ``sqrt(n)``, the structural cutoff that keeps
    multi-edges rare). Self-loops and multi-edges from stub matching are
    removed, so realized degrees can be slightly lower.
    """
    if exponent <= 1:
        raise ValueError("exponent must exceed 1")
    if max_degree is None:
        max_degree = max(min_degree, int(np.sqrt(n)))
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    k = np.floor(min_degree * (1.0 - u) ** (-1.0 / (exponent - 1.0))).astype(np.int64)
    k = np.minimum(k, max_degree)
    if k.sum() % 2:
        k[rng.integers(n)] += 1
    stubs = np.repeat(np.arange(n, dtype=np.int64), k)
    rng.shuffle(stubs)
    return Network.from_edges(stubs.reshape(-1, 2), node_count=n)


def reachable_from(net: Network, seeds: Iterable[int]) -> np.ndarray:
    """Boolean mask of nodes in the connected components of ``seeds``."""
    seen = np.zeros(net.node_count, dtype=bool)
    stack = list(seeds)
    seen[stack] = True
    adj = net.adjacency
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen
