"""Core adjacency-matrix types shared by every engine in the package.

Edge convention, used everywhere: entry (i, j) refers to the edge i -> j,
i.e. row i lists the targets of node i and column j lists the parents of
node j.  All types are immutable after construction and safe to share
across worker processes.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

# Probability floor applied to every prior entry so log(prior) stays finite.
PRIOR_FLOOR = 1e-6


def _square(mat, name: str) -> np.ndarray:
    arr = np.array(mat, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {arr.shape}")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeightedAdjacency:
    """Weighted adjacency matrix of a linear model; diagonal fixed at zero."""

    w: np.ndarray

    def __post_init__(self):
        w = _square(self.w, "w")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("diagonal entries must be zero")
        object.__setattr__(self, "w", _freeze(w))

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class BinaryGraph:
    """0/1 adjacency matrix; undirected graphs are stored symmetrically."""

    a: np.ndarray
    directed: bool = True

    def __post_init__(self):
        a = _square(self.a, "a")
        if not np.isin(a, (0.0, 1.0)).all():
            raise ValueError("entries must be 0 or 1")
        a = a.astype(np.int8)
        if np.any(np.diag(a) != 0):
            raise ValueError("diagonal entries must be zero")
        if not self.directed and not np.array_equal(a, a.T):
            raise ValueError("undirected graph must be symmetric")
        object.__setattr__(self, "a", _freeze(a))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def edge_count(self) -> int:
        total = int(self.a.sum())
        return total if self.directed else total // 2

    def edges(self) -> list[tuple[int, int]]:
        """Directed edges (i, j); for undirected graphs, pairs with i < j."""
        if self.directed:
            return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.a))]
        iu, ju = np.nonzero(np.triu(self.a, k=1))
        return [(int(i), int(j)) for i, j in zip(iu, ju)]

    @classmethod
    def from_edges(cls, n: int, edges, directed: bool = True) -> "BinaryGraph":
        a = np.zeros((n, n), dtype=np.int8)
        for i, j in edges:
            a[i, j] = 1
            if not directed:
                a[j, i] = 1
        return cls(a, directed=directed)

    def skeleton(self) -> "BinaryGraph":
        """Undirected version: pair present iff an edge exists either way."""
        sk = ((self.a + self.a.T) > 0).astype(np.int8)
        np.fill_diagonal(sk, 0)
        return BinaryGraph(sk, directed=False)


@dataclass(frozen=True)
class PriorMatrix:
    """Edge-existence probabilities, floored into [PRIOR_FLOOR, 1 - PRIOR_FLOOR].

    Flooring is applied at construction; the diagonal is pinned at the floor
    so that log(p) is finite for every entry.
    """

    p: np.ndarray
    floor: float = PRIOR_FLOOR

    def __post_init__(self):
        p = _square(self.p, "p")
        if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
            raise ValueError("prior entries must lie in [0, 1]")
        p = np.clip(p, self.floor, 1.0 - self.floor)
        np.fill_diagonal(p, self.floor)
        object.__setattr__(self, "p", _freeze(p))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @classmethod
    def uniform(cls, n: int, q: float) -> "PriorMatrix":
        return cls(np.full((n, n), q))

    def pair_probability(self) -> np.ndarray:
        """Symmetric per-pair probability, the mean of the two directions."""
        return (self.p + self.p.T) / 2.0


@dataclass(frozen=True)
class Cpdag:
    """Equivalence-class graph: a directed (compelled) part plus undirected edges."""

    n: int
    directed: frozenset = field(default_factory=frozenset)
    undirected: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        directed = frozenset((int(i), int(j)) for i, j in self.directed)
        undirected = frozenset(
            (min(int(i), int(j)), max(int(i), int(j))) for i, j in self.undirected
        )
        for i, j in directed:
            if (min(i, j), max(i, j)) in undirected:
                raise ValueError(f"edge {i}-{j} is both directed and undirected")
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)
        if directed and not is_acyclic(BinaryGraph.from_edges(self.n, directed)):
            raise ValueError("directed part of a CPDAG must be acyclic")

    @property
    def edge_count(self) -> int:
        return len(self.directed) + len(self.undirected)

    def to_matrix(self) -> np.ndarray:
        """CSV encoding: 1 marks a directed edge i->j, 2 in both cells marks i-j."""
        a = np.zeros((self.n, self.n), dtype=np.int8)
        for i, j in self.directed:
            a[i, j] = 1
        for i, j in self.undirected:
            a[i, j] = a[j, i] = 2
        return a

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "Cpdag":
        a = np.asarray(a)
        n = a.shape[0]
        directed = {(int(i), int(j)) for i, j in zip(*np.nonzero(a == 1))}
        undirected = {
            (int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(a, k=1) == 2))
        }
        return cls(n, frozenset(directed), frozenset(undirected))


def is_acyclic(g: BinaryGraph) -> bool:
    """Kahn peeling: True iff the directed graph admits a topological order."""
    if not g.directed:
        raise ValueError("acyclicity is defined for directed graphs")
    return topological_order(g.a) is not None


def topological_order(a: np.ndarray) -> list[int] | None:
    """Topological order of a 0/1 adjacency matrix, or None if cyclic.

    Deterministic: among ready nodes the smallest index is taken first.
    """
    n = a.shape[0]
    indeg = np.asarray(a, dtype=np.int64).sum(axis=0)
    children = [np.nonzero(a[i])[0] for i in range(n)]
    ready = sorted(np.nonzero(indeg == 0)[0].tolist())
    order: list[int] = []
    heapq.heapify(ready)
    while ready:
        u = heapq.heappop(ready)
        order.append(int(u))
        for v in children[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, int(v))
    return order if len(order) == n else None


def threshold_by_edge_count(w: WeightedAdjacency, k: int) -> BinaryGraph:
    """Keep the k nonzero off-diagonal entries of largest magnitude.

    Ties are broken by ascending row-major index, so output is reproducible.
    """
    n = w.n
    if k < 0 or k > n * (n - 1):
        raise ValueError(f"k={k} outside [0, {n * (n - 1)}]")
    absw = np.abs(w.w).ravel()
    flat = np.arange(n * n)
    offdiag = flat[flat // n != flat % n]
    nonzero = offdiag[absw[offdiag] > 0.0]
    # lexsort keys: last key is primary, so sort by descending |w| then index
    ranked = nonzero[np.lexsort((nonzero, -absw[nonzero]))]
    keep = ranked[:k]
    a = np.zeros(n * n, dtype=np.int8)
    a[keep] = 1
    return BinaryGraph(a.reshape(n, n))


def threshold_by_weight(w: WeightedAdjacency, tau: float) -> BinaryGraph:
    """Keep entries with |w[i, j]| strictly greater than tau."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    a = (np.abs(w.w) > tau).astype(np.int8)
    np.fill_diagonal(a, 0)
    return BinaryGraph(a)


def strongly_connected_components(a: np.ndarray) -> list[list[int]]:
    """Tarjan's algorithm (iterative) on a 0/1 adjacency matrix."""
    n = a.shape[0]
    children = [np.nonzero(a[i])[0].tolist() for i in range(n)]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, iter(children[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for u in it:
                if index[u] == -1:
                    index[u] = low[u] = counter
                    counter += 1
                    stack.append(u)
                    on_stack[u] = True
                    work.append((u, iter(children[u])))
                    advanced = True
                    break
                if on_stack[u]:
                    low[v] = min(low[v], index[u])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    u = stack.pop()
                    on_stack[u] = False
                    comp.append(u)
                    if u == v:
                        break
                comps.append(sorted(comp))
    return comps
