"""DAG container, structured and random generators, and graph metrics.

Adjacency convention throughout the package: ``adj[i, j] == 1`` means
node ``j`` is a direct cause of node ``i`` (row = child, column = parent).
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from math import comb
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .utils import InvalidArgumentError, ValidationError, check_rng

STRUCTURED_KINDS = ("chain", "collider", "tree", "bidiag", "jungle", "full")


def topological_order(adj) -> list[int] | None:
    """Kahn's algorithm; returns ``None`` when the graph has a cycle."""
    adj = np.asarray(adj)
    n = adj.shape[0]
    indeg = adj.sum(axis=1).astype(int)
    ready = [i for i in range(n) if indeg[i] == 0]
    order = []
    while ready:
        j = ready.pop(0)
        order.append(j)
        for i in np.flatnonzero(adj[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                ready.append(int(i))
    return order if len(order) == n else None


def is_acyclic(adj) -> bool:
    adj = np.asarray(adj)
    if np.any(np.diag(adj)):
        return False
    return topological_order(adj) is not None


@dataclass(frozen=True, eq=False)
class Dag:
    """Immutable binary adjacency over ``n`` nodes, checked acyclic."""

    adj: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adj, dtype=np.int8, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise InvalidArgumentError(f"adjacency must be a non-empty square matrix, got {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise InvalidArgumentError("adjacency must be binary")
        if not is_acyclic(adj):
            raise ValidationError("adjacency contains a cycle or self-loop")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @classmethod
    def empty(cls, n: int) -> "Dag":
        return cls(np.zeros((n, n), dtype=np.int8))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        """Build from ``(parent, child)`` pairs."""
        adj = np.zeros((n, n), dtype=np.int8)
        for p, c in edges:
            if not (0 <= p < n and 0 <= c < n):
                raise InvalidArgumentError(f"edge {p}->{c} out of range for n={n}")
            adj[c, p] = 1
        return cls(adj)

    def edges(self) -> list[tuple[int, int]]:
        """Edges as sorted ``(parent, child)`` pairs."""
        child, parent = np.nonzero(self.adj)
        return sorted(zip(parent.tolist(), child.tolist()))

    def parents(self, i: int) -> list[int]:
        return np.flatnonzero(self.adj[i]).tolist()

    def children(self, j: int) -> list[int]:
        return np.flatnonzero(self.adj[:, j]).tolist()

    @property
    def n_edges(self) -> int:
        return int(self.adj.sum())

    def topological_order(self) -> list[int]:
        return topological_order(self.adj)

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return self.adj.shape == other.adj.shape and bool(np.array_equal(self.adj, other.adj))

    def __hash__(self):
        return hash((self.n, self.adj.tobytes()))

    def __repr__(self):
        return f"Dag(n={self.n}, edges={self.edges()})"

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = [f"dag n={self.n}"]
        lines += [f"edge {p} {c}" for p, c in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Dag":
        n = None
        edges = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "dag" and len(parts) == 2 and parts[1].startswith("n="):
                    n = int(parts[1][2:])
                elif parts[0] == "edge" and len(parts) == 3:
                    edges.append((int(parts[1]), int(parts[2])))
                else:
                    raise ValueError(line)
            except ValueError:
                raise ValidationError(f"line {lineno}: cannot parse {raw!r}") from None
        if n is None:
            raise ValidationError("missing 'dag n=<N>' header")
        return cls.from_edges(n, edges)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(f"x{j}" for j in range(self.n)) + "\n")
        np.savetxt(buf, self.adj, fmt="%d", delimiter=",")
        return buf.getvalue()


# -- generators ------------------------------------------------------------


def structured_graph(kind: str, n: int) -> Dag:
    """Deterministic structured DAG of the given ``kind`` over ``n`` nodes.

    chain: i->i+1; collider: every i<n-1 points to n-1; tree: i->2i+1, 2i+2;
    bidiag: i->i+1, i->i+2; jungle: tree plus i->4i+3..4i+6; full: i->j, i<j.
    """
    if kind not in STRUCTURED_KINDS:
        raise InvalidArgumentError(f"unknown graph kind {kind!r}; choose from {STRUCTURED_KINDS}")
    min_n = 3 if kind in ("tree", "jungle") else 2
    if not isinstance(n, (int, np.integer)) or n < min_n:
        raise InvalidArgumentError(f"{kind} graph needs n >= {min_n}, got {n}")
    edges = []
    if kind == "chain":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "collider":
        edges = [(i, n - 1) for i in range(n - 1)]
    elif kind in ("tree", "jungle"):
        edges = [(i, c) for i in range(n) for c in (2 * i + 1, 2 * i + 2) if c < n]
        if kind == "jungle":
            edges += [(i, c) for i in range(n) for c in range(4 * i + 3, 4 * i + 7) if c < n]
    elif kind == "bidiag":
        edges = [(i, c) for i in range(n) for c in (i + 1, i + 2) if c < n]
    elif kind == "full":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Dag.from_edges(n, edges)


def erdos_renyi(n: int, density_k: int, rng=None) -> Dag:
    """Random DAG with exactly ``density_k * n`` edges.

    Edges are drawn without replacement from the strictly upper-triangular
    positions of a uniformly random node permutation.
    """
    if n < 1 or density_k < 1:
        raise InvalidArgumentError("n and density_k must be positive")
    n_edges = density_k * n
    if n_edges > comb(n, 2):
        raise InvalidArgumentError(
            f"ER-{density_k} on {n} nodes needs {n_edges} edges but only {comb(n, 2)} exist")
    rng = check_rng(rng)
    perm = rng.permutation(n)
    upper = [(a, b) for a in range(n) for b in range(a + 1, n)]
    chosen = rng.choice(len(upper), size=n_edges, replace=False)
    edges = [(int(perm[upper[c][0]]), int(perm[upper[c][1]])) for c in np.sort(chosen)]
    return Dag.from_edges(n, edges)


# -- metrics ---------------------------------------------------------------


def shd(g1: Dag, g2: Dag) -> int:
    """Structural Hamming distance; a reversed edge counts as one edit."""
    a = g1.adj if isinstance(g1, Dag) else np.asarray(g1)
    b = g2.adj if isinstance(g2, Dag) else np.asarray(g2)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"size mismatch: {a.shape} vs {b.shape}")
    diff = (a != b)
    # a pair (i, j) differs if either direction differs; count each pair once
    pair_diff = np.triu(diff | diff.T, k=1)
    return int(pair_diff.sum())


class NodeTopoProps(NamedTuple):
    out_degree: int
    descendant_count: int
    topo_level: int


def topo_props(g: Dag) -> list[NodeTopoProps]:
    adj = g.adj
    n = g.n
    order = topological_order(adj)
    level = [0] * n
    for v in order:
        for p in np.flatnonzero(adj[v]):
            level[v] = max(level[v], level[p] + 1)
    # reachability by propagating descendant sets in reverse topological order
    desc = [set() for _ in range(n)]
    for v in reversed(order):
        for c in np.flatnonzero(adj[:, v]):
            desc[v].add(int(c))
            desc[v] |= desc[c]
    out_deg = adj.sum(axis=0)
    return [NodeTopoProps(int(out_deg[v]), len(desc[v]), level[v]) for v in range(n)]


class UndefinedCorrelationError(ValueError):
    """Pearson correlation requested on a constant vector."""


def selection_correlation(selection_counts: Sequence[float], props: Sequence[float]) -> float:
    x = np.asarray(selection_counts, dtype=float)
    y = np.asarray(props, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgumentError("inputs must be 1D sequences of equal length")
    if x.size < 3:
        raise InvalidArgumentError("need at least 3 nodes for a correlation")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))
