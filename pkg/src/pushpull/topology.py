"""Benchmark communication topologies over directed graphs.

Edge convention: an edge ``(j, i)`` means node ``j`` sends information to
node ``i``.  Every generated graph carries a self-loop on each node and is
strongly connected (undirected generators retry with incremented seeds until
connectivity holds).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

DIRECTED_KINDS = ("exponential", "ring", "grid")
UNDIRECTED_KINDS = ("random", "geometric", "nearest_neighbor")
KINDS = DIRECTED_KINDS + UNDIRECTED_KINDS

MAX_CONNECTIVITY_RETRIES = 100


class ConnectivityError(RuntimeError):
    """Raised when a random generator cannot produce a strongly connected graph."""


@dataclass(frozen=True)
class Digraph:
    """Directed graph with self-loops on a node set ``{0, ..., n-1}``."""

    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        if not isinstance(self.edges, frozenset):
            object.__setattr__(self, "edges", frozenset(self.edges))
        for j, i in self.edges:
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise ValueError(f"edge ({j}, {i}) out of range for n={self.n}")
        missing = [i for i in range(self.n) if (i, i) not in self.edges]
        if missing:
            raise ValueError(f"self-loop missing at nodes {missing}")

    def adjacency(self) -> np.ndarray:
        """Boolean matrix with ``adj[i, j] = True`` iff ``(j, i)`` is an edge.

        Row ``i`` marks the senders node ``i`` receives from, which is the
        sparsity pattern of the mixing matrices built on this graph.
        """
        adj = np.zeros((self.n, self.n), dtype=bool)
        for j, i in self.edges:
            adj[i, j] = True
        return adj

    def out_lists(self):
        out = [[] for _ in range(self.n)]
        for j, i in self.edges:
            out[j].append(i)
        return out


@dataclass(frozen=True)
class TopologySpec:
    """Recipe for one benchmark graph.

    Kind-specific parameters left as ``None`` are resolved to defaults at
    build time: grid dimensions pick the most square factorization of ``n``,
    random graphs use ``p=0.5``, geometric graphs use the connectivity-threshold
    radius ``sqrt(2 ln n / n)`` and nearest-neighbor graphs use
    ``min(n - 1, ceil(log2 n) + 1)`` neighbors.
    """

    kind: str
    n: int
    rows: int | None = None
    cols: int | None = None
    p: float | None = None
    radius: float | None = None
    k: int | None = None
    seed: int = 0

    def resolved(self) -> "TopologySpec":
        """Return a copy with all kind-relevant parameters filled in."""
        if self.kind not in KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        out = self
        if self.kind == "grid":
            rows, cols = self.rows, self.cols
            if rows is None and cols is None:
                rows = _largest_divisor_at_most_sqrt(self.n)
                cols = self.n // rows
            elif rows is None:
                rows = self.n // cols
            elif cols is None:
                cols = self.n // rows
            if rows * cols != self.n or rows < 1 or cols < 1:
                raise ValueError(f"grid dimensions {rows}x{cols} do not multiply to n={self.n}")
            out = replace(out, rows=rows, cols=cols)
        elif self.kind == "random":
            p = 0.5 if self.p is None else self.p
            if not 0.0 < p <= 1.0:
                raise ValueError(f"random edge probability must be in (0, 1], got {p}")
            out = replace(out, p=p)
        elif self.kind == "geometric":
            r = self.radius
            if r is None:
                r = math.sqrt(2.0 * math.log(max(self.n, 2)) / self.n)
            if r <= 0.0:
                raise ValueError(f"geometric radius must be positive, got {r}")
            out = replace(out, radius=r)
        elif self.kind == "nearest_neighbor":
            k = self.k
            if k is None:
                k = min(self.n - 1, math.ceil(math.log2(max(self.n, 2))) + 1)
                k = max(k, 1) if self.n > 1 else 0
            if self.n > 1 and not 1 <= k < self.n:
                raise ValueError(f"neighbor count k={k} must satisfy 1 <= k < n={self.n}")
            out = replace(out, k=k)
        return out


def _largest_divisor_at_most_sqrt(n: int) -> int:
    best = 1
    for r in range(1, int(math.isqrt(n)) + 1):
        if n % r == 0:
            best = r
    return best


def is_strongly_connected(g: Digraph) -> bool:
    """True iff every node reaches every other node along directed edges."""
    if g.n == 1:
        return True
    fwd = [[] for _ in range(g.n)]
    rev = [[] for _ in range(g.n)]
    for j, i in g.edges:
        fwd[j].append(i)
        rev[i].append(j)
    return _reaches_all(fwd) and _reaches_all(rev)


def _reaches_all(adj) -> bool:
    seen = [False] * len(adj)
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                count += 1
                queue.append(w)
    return count == len(adj)


def build_topology(spec: TopologySpec) -> Digraph:
    """Build the digraph described by ``spec``.

    Directed kinds are deterministic in ``n``; undirected kinds draw from a
    generator seeded by ``spec.seed`` and retry with ``seed+1, seed+2, ...``
    (at most ``MAX_CONNECTIVITY_RETRIES`` times) until the symmetrized graph
    is strongly connected.
    """
    spec = spec.resolved()
    if spec.kind in DIRECTED_KINDS:
        edges = _DIRECTED_BUILDERS[spec.kind](spec)
        g = Digraph(spec.n, frozenset(edges))
        if not is_strongly_connected(g):
            raise ConnectivityError(f"{spec.kind} graph on n={spec.n} is not strongly connected")
        return g
    for attempt in range(MAX_CONNECTIVITY_RETRIES):
        rng = np.random.default_rng(spec.seed + attempt)
        edges = _UNDIRECTED_BUILDERS[spec.kind](spec, rng)
        g = Digraph(spec.n, frozenset(edges))
        if is_strongly_connected(g):
            return g
    raise ConnectivityError(
        f"no strongly connected {spec.kind} graph within {MAX_CONNECTIVITY_RETRIES} "
        f"seed retries (n={spec.n}, seed={spec.seed})"
    )


def _self_loops(n):
    return {(i, i) for i in range(n)}


def _build_exponential(spec):
    n = spec.n
    edges = _self_loops(n)
    if n == 1:
        return edges
    for i in range(n):
        for j in range((n - 1).bit_length()):
            edges.add((i, (i + (1 << j)) % n))
    return edges


def _build_ring(spec):
    n = spec.n
    edges = _self_loops(n)
    if n > 1:
        for i in range(n):
            edges.add((i, (i + 1) % n))
    return edges


def _build_grid(spec):
    # Row-major lattice with right/down edges. The right edge of the last
    # column continues to the first column of the next row, and the final
    # node wraps to node 0, closing the row-major chain so the graph is
    # strongly connected; down edges act as shortcuts.
    n, rows, cols = spec.n, spec.rows, spec.cols
    edges = _self_loops(n)
    if n == 1:
        return edges
    for u in range(n):
        edges.add((u, (u + 1) % n))
        r = u // cols
        if r + 1 < rows:
            edges.add((u, u + cols))
    return edges


def _symmetric(pairs, n):
    edges = _self_loops(n)
    for i, j in pairs:
        edges.add((i, j))
        edges.add((j, i))
    return edges


def _build_random(spec, rng):
    pairs = []
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            if rng.random() < spec.p:
                pairs.append((i, j))
    return _symmetric(pairs, spec.n)


def _unit_square_points(n, rng):
    return rng.random((n, 2))


def _build_geometric(spec, rng):
    pts = _unit_square_points(spec.n, rng)
    pairs = []
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            if np.hypot(*(pts[i] - pts[j])) <= spec.radius:
                pairs.append((i, j))
    return _symmetric(pairs, spec.n)


def _build_nearest_neighbor(spec, rng):
    pts = _unit_square_points(spec.n, rng)
    pairs = []
    if spec.n > 1:
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        for i in range(spec.n):
            for j in np.argsort(d2[i], kind="stable")[: spec.k]:
                pairs.append((i, int(j)))
    return _symmetric(pairs, spec.n)


_DIRECTED_BUILDERS = {
    "exponential": _build_exponential,
    "ring": _build_ring,
    "grid": _build_grid,
}

_UNDIRECTED_BUILDERS = {
    "random": _build_random,
    "geometric": _build_geometric,
    "nearest_neighbor": _build_nearest_neighbor,
}
