"""Greedy equivalence search over CPDAGs with a decomposable Gaussian BIC
score, optionally adjusted by pairwise edge-existence priors.

The search is the classic two-phase procedure: a forward pass applying the
best positive single-edge insertion until none improves the score, then a
backward pass applying the best positive single-edge deletion.  Moves are
the standard Insert(x, y, T) / Delete(x, y, H) operators on equivalence
classes; after each move the graph is re-closed into a completed PDAG by
extending it to a consistent DAG and relabeling compelled edges.

With a prior, every insertion delta gains log(p_pair / 2) - log(1 - p_pair)
for the touched pair and every deletion the negation, so a uniform pair
probability of 2/3 leaves the search exactly as unprioritized.
"""
from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .graphs import BinaryGraph, Cpdag, PriorMatrix
from .stats import SufficientStats

RIDGE_JITTER = 1e-8
# Bound on candidate-set subsets examined per operator evaluation.  Subsets
# are enumerated size-ascending, so truncation keeps the small sets.
_MAX_SUBSETS = 4096
# Strict-improvement floor: deltas below this count as "no improvement",
# which guards the greedy loops against float-noise oscillation.
_MIN_GAIN = 1e-12


@dataclass
class FgesConfig:
    lambda_bic: float = 1.0
    max_parents: int = 10
    prior: PriorMatrix | None = None
    tie_salt: int = 0
    refresh: str = "auto"  # "full" re-scores every pair per move; "affected" only changed nodes

    def __post_init__(self):
        if self.lambda_bic <= 0:
            raise ValueError("lambda_bic must be positive")
        if self.max_parents < 0:
            raise ValueError("max_parents must be nonnegative")
        if self.refresh not in ("auto", "full", "affected"):
            raise ValueError("refresh must be auto, full, or affected")


def local_bic_score(
    i: int, parents, stats: SufficientStats, lambda_bic: float = 1.0
) -> float:
    """Node score: Gaussian profile log-likelihood of i given its parents,
    minus lambda * (|parents| + 1) / 2 * log(m)."""
    parents = tuple(sorted(int(p) for p in parents))
    if i in parents:
        raise ValueError("a node cannot parent itself")
    var = _residual_variance(stats.corr, i, parents)
    m = stats.m
    ll = -0.5 * m * (math.log(2.0 * math.pi * var) + 1.0)
    return ll - lambda_bic * (len(parents) + 1) / 2.0 * math.log(m)


def _residual_variance(corr: np.ndarray, i: int, parents: tuple[int, ...]) -> float:
    if not parents:
        var = float(corr[i, i])
    else:
        sub = corr[np.ix_(parents, parents)]
        cvec = corr[list(parents), i]
        try:
            sol = np.linalg.solve(sub, cvec)
        except np.linalg.LinAlgError:
            warnings.warn("singular parent submatrix; ridge-stabilized solve")
            sol = np.linalg.solve(sub + RIDGE_JITTER * np.eye(len(parents)), cvec)
        var = float(corr[i, i] - cvec @ sol)
    if var < RIDGE_JITTER:
        warnings.warn(f"residual variance floored at {RIDGE_JITTER}")
        var = RIDGE_JITTER
    return var


def prior_graph_log(p: PriorMatrix) -> float:
    """Log-probability of the empty graph: sum over unordered pairs of
    log(1 - p_pair)."""
    pair = p.pair_probability()
    iu, ju = np.triu_indices(p.n, k=1)
    return float(np.sum(np.log(1.0 - pair[iu, ju])))


def prior_insert_delta(i: int, j: int, p: PriorMatrix) -> float:
    """Score change of adding the pair {i, j}: log(p_pair / 2) - log(1 - p_pair)."""
    pij = float(p.pair_probability()[i, j])
    return math.log(0.5 * pij) - math.log(1.0 - pij)


def prior_delete_delta(i: int, j: int, p: PriorMatrix) -> float:
    return -prior_insert_delta(i, j, p)


class _ScoreCache:
    """Local scores memoized by (node, parent set)."""

    def __init__(self, stats: SufficientStats, lambda_bic: float):
        self.stats = stats
        self.lam = lambda_bic
        self._cache: dict[tuple[int, frozenset], float] = {}

    def score(self, i: int, parents) -> float:
        key = (i, frozenset(parents))
        val = self._cache.get(key)
        if val is None:
            val = local_bic_score(i, key[1], self.stats, self.lam)
            self._cache[key] = val
        return val


class _PdagState:
    """Mutable mixed graph: pa/ch for directed edges, nb for undirected."""

    __slots__ = ("n", "pa", "ch", "nb")

    def __init__(self, n: int):
        self.n = n
        self.pa = [set() for _ in range(n)]
        self.ch = [set() for _ in range(n)]
        self.nb = [set() for _ in range(n)]

    def copy(self) -> "_PdagState":
        out = _PdagState(self.n)
        out.pa = [set(s) for s in self.pa]
        out.ch = [set(s) for s in self.ch]
        out.nb = [set(s) for s in self.nb]
        return out

    def adj(self, v: int) -> set:
        return self.pa[v] | self.ch[v] | self.nb[v]

    def adjacent(self, x: int, y: int) -> bool:
        return y in self.ch[x] or y in self.pa[x] or y in self.nb[x]

    def add_directed(self, x: int, y: int) -> None:
        self.pa[y].add(x)
        self.ch[x].add(y)

    def add_undirected(self, x: int, y: int) -> None:
        self.nb[x].add(y)
        self.nb[y].add(x)

    def remove_any(self, x: int, y: int) -> None:
        self.pa[y].discard(x)
        self.ch[x].discard(y)
        self.pa[x].discard(y)
        self.ch[y].discard(x)
        self.nb[x].discard(y)
        self.nb[y].discard(x)

    def orient(self, x: int, y: int) -> None:
        """Turn the undirected edge x - y into x -> y."""
        self.nb[x].discard(y)
        self.nb[y].discard(x)
        self.add_directed(x, y)

    def clique(self, nodes) -> bool:
        nodes = list(nodes)
        for a, b in combinations(nodes, 2):
            if not self.adjacent(a, b):
                return False
        return True

    def blocked(self, y: int, x: int, block: set) -> bool:
        """True iff every semi-directed path from y to x meets `block`."""
        if y in block:
            return True
        seen = {y}
        stack = [y]
        while stack:
            v = stack.pop()
            for group in (self.ch[v], self.nb[v]):
                for u in group:
                    if u in block or u in seen:
                        continue
                    if u == x:
                        return False
                    seen.add(u)
                    stack.append(u)
        return True

    def directed_edges(self) -> list[tuple[int, int]]:
        return sorted((x, y) for y in range(self.n) for x in self.pa[y])

    def undirected_edges(self) -> list[tuple[int, int]]:
        return sorted((x, y) for x in range(self.n) for y in self.nb[x] if x < y)

    def to_cpdag(self) -> Cpdag:
        return Cpdag(
            self.n,
            frozenset(self.directed_edges()),
            frozenset(self.undirected_edges()),
        )

    @classmethod
    def from_cpdag(cls, c: Cpdag) -> "_PdagState":
        state = cls(c.n)
        for x, y in c.directed:
            state.add_directed(x, y)
        for x, y in c.undirected:
            state.add_undirected(x, y)
        return state


def _extension_order(n: int, tie_salt: int) -> list[int]:
    """Node scan order for the extension.  Highest index is absorbed first by
    default, so a lone undirected edge orients from the lower to the higher
    node; a nonzero salt shuffles the order reproducibly."""
    if tie_salt:
        rng = np.random.default_rng(tie_salt)
        return [int(v) for v in rng.permutation(n)]
    return list(range(n - 1, -1, -1))


def _pdag_to_dag(state: _PdagState, tie_salt: int = 0) -> list[set]:
    """Consistent extension of a PDAG: repeatedly absorb a sink whose
    undirected neighbors are adjacent to all of its other adjacents, orienting
    its undirected edges inward.  Returns parent sets, or raises if the PDAG
    admits no extension."""
    n = state.n
    work = state.copy()
    out_pa = [set(p) for p in state.pa]
    remaining = set(range(n))
    rank = {v: i for i, v in enumerate(_extension_order(n, tie_salt))}

    def eligible(v: int) -> bool:
        if work.ch[v]:
            return False
        adj_v = work.pa[v] | work.nb[v]
        for w in work.nb[v]:
            if any(u != w and not work.adjacent(w, u) for u in adj_v):
                return False
        return True

    heap = [(rank[v], v) for v in range(n)]
    heapq.heapify(heap)
    while remaining:
        found = None
        while heap:
            _, v = heapq.heappop(heap)
            if v not in remaining:
                continue
            if eligible(v):
                found = v
                break
            # v is retested only when one of its adjacents is absorbed;
            # nothing else can change its eligibility
        if found is None:
            raise ValueError("PDAG admits no consistent extension")
        for w in work.nb[found]:
            out_pa[found].add(w)
        touched = work.pa[found] | work.nb[found]
        for u in touched:
            work.nb[u].discard(found)
            work.ch[u].discard(found)
            work.pa[u].discard(found)
        work.pa[found].clear()
        work.nb[found].clear()
        remaining.discard(found)
        for u in touched:
            if u in remaining:
                heapq.heappush(heap, (rank[u], u))
    return out_pa


def _dag_to_cpdag(pa: list[set], n: int) -> _PdagState:
    """Completed PDAG of a DAG via compelled-edge labeling.

    Edges are totally ordered (targets in topological order, sources from the
    latest to the earliest) and labeled compelled or reversible in that
    order; reversible edges become undirected.
    """
    children = [set() for _ in range(n)]
    indeg = [0] * n
    for y in range(n):
        for x in pa[y]:
            children[x].add(y)
            indeg[y] += 1
    ready = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(ready)
    topo: list[int] = []
    while ready:
        v = heapq.heappop(ready)
        topo.append(v)
        for u in sorted(children[v]):
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)
    if len(topo) != n:
        raise ValueError("input is not a DAG")
    pos = {v: i for i, v in enumerate(topo)}

    ordered: list[tuple[int, int]] = []
    for y in topo:
        for x in sorted(pa[y], key=lambda v: -pos[v]):
            ordered.append((x, y))
    edge_rank = {e: i for i, e in enumerate(ordered)}

    label: dict[tuple[int, int], str] = {}
    for x, y in ordered:
        if (x, y) in label:
            continue
        decided = False
        for w in sorted(pa[x], key=lambda v: edge_rank[(v, x)]):
            if label.get((w, x)) != "compelled":
                continue
            if w not in pa[y]:
                for z in pa[y]:
                    label[(z, y)] = "compelled"
                decided = True
                break
            label[(w, y)] = "compelled"
        if decided:
            continue
        verdict = (
            "compelled"
            if any(z != x and z not in pa[x] for z in pa[y])
            else "reversible"
        )
        for z in pa[y]:
            if (z, y) not in label:
                label[(z, y)] = verdict

    state = _PdagState(n)
    for (x, y), verdict in label.items():
        if verdict == "compelled":
            state.add_directed(x, y)
        else:
            state.add_undirected(x, y)
    return state


def cpdag_to_dag(c: Cpdag, tie_salt: int = 0) -> BinaryGraph:
    """Deterministic consistent extension of a CPDAG into a member DAG."""
    pa = _pdag_to_dag(_PdagState.from_cpdag(c), tie_salt)
    a = np.zeros((c.n, c.n), dtype=np.int8)
    for y, parents in enumerate(pa):
        for x in parents:
            a[x, y] = 1
    return BinaryGraph(a)


def dag_total_score(
    dag: BinaryGraph,
    stats: SufficientStats,
    lambda_bic: float = 1.0,
    prior: PriorMatrix | None = None,
) -> float:
    """Decomposable total score of a DAG: sum of node scores, plus the graph
    log-prior over pairs when a prior is given."""
    cache = _ScoreCache(stats, lambda_bic)
    total = sum(cache.score(y, np.nonzero(dag.a[:, y])[0]) for y in range(dag.n))
    if prior is not None:
        pair = prior.pair_probability()
        present = (dag.a + dag.a.T) > 0
        for i in range(dag.n):
            for j in range(i + 1, dag.n):
                pij = pair[i, j]
                total += math.log(0.5 * pij) if present[i, j] else math.log(1.0 - pij)
    return total


class _GesSearch:
    def __init__(self, stats: SufficientStats, config: FgesConfig):
        self.stats = stats
        self.config = config
        self.n = stats.n
        self.cache = _ScoreCache(stats, config.lambda_bic)
        self.state = _PdagState(self.n)
        if config.prior is not None:
            pair = config.prior.pair_probability()
            self.prior_delta = np.log(0.5 * pair) - np.log(1.0 - pair)
        else:
            self.prior_delta = np.zeros((self.n, self.n))
        mode = config.refresh
        if mode == "auto":
            mode = "full" if self.n <= 16 else "affected"
        self.full_refresh = mode == "full"
        self.trace: list[dict] = []

    # ------------------------------------------------------------- operators
    def _subsets(self, pool: list[int], extend_ok) -> list[tuple[int, ...]]:
        """Size-ascending subsets of `pool`, grown only through elements that
        pass `extend_ok(subset, element)`; truncated at _MAX_SUBSETS."""
        out: list[tuple[int, ...]] = [()]
        frontier: list[tuple[tuple[int, ...], int]] = [((), 0)]
        while frontier and len(out) < _MAX_SUBSETS:
            nxt: list[tuple[tuple[int, ...], int]] = []
            for sub, start in frontier:
                for idx in range(start, len(pool)):
                    t = pool[idx]
                    if extend_ok(sub, t):
                        cand = sub + (t,)
                        out.append(cand)
                        nxt.append((cand, idx + 1))
                        if len(out) >= _MAX_SUBSETS:
                            return out
            frontier = nxt
        return out

    def best_insert(self, x: int, y: int, check_path: bool = True):
        """Best Insert(x, y, T) for a nonadjacent ordered pair, or None.

        With check_path=False the semi-directed blocking test is skipped,
        giving an optimistic upper bound used for cheap candidate refreshes.
        """
        st = self.state
        na = st.nb[y] & st.adj(x)
        if not st.clique(na):
            return None
        pa_y = st.pa[y]
        base_size = len(pa_y | na)
        if base_size + 1 > self.config.max_parents:
            return None
        t_pool = sorted(st.nb[y] - st.adj(x) - {x})

        def extend_ok(sub: tuple[int, ...], t: int) -> bool:
            if base_size + len(sub) + 2 > self.config.max_parents:
                return False
            return all(st.adjacent(t, u) for u in na) and all(
                st.adjacent(t, u) for u in sub
            )

        best = None
        for t_sub in self._subsets(t_pool, extend_ok):
            block = na | set(t_sub)
            if check_path and not st.blocked(y, x, block):
                continue
            base = frozenset(pa_y | block)
            delta = self.cache.score(y, base | {x}) - self.cache.score(y, base)
            delta += self.prior_delta[x, y]
            if best is None or delta > best[0]:
                best = (delta, t_sub)
        return best

    def best_delete(self, x: int, y: int):
        """Best Delete(x, y, H) for an existing edge x -> y or x - y."""
        st = self.state
        na = st.nb[y] & st.adj(x)
        pa_y = st.pa[y]
        best = None
        for h_sub in self._subsets(sorted(na), lambda sub, t: True):
            keep = na - set(h_sub)
            if not st.clique(keep):
                continue
            base = frozenset(keep | (pa_y - {x}))
            delta = self.cache.score(y, base) - self.cache.score(y, base | {x})
            delta -= self.prior_delta[x, y]
            if best is None or delta > best[0]:
                best = (delta, h_sub)
        return best

    def apply_insert(self, x: int, y: int, t_sub: tuple[int, ...]) -> set:
        pre = self.state.copy()
        self.state.add_directed(x, y)
        for t in t_sub:
            self.state.orient(t, y)
        return self._reclose(pre) | {x, y}

    def apply_delete(self, x: int, y: int, h_sub: tuple[int, ...]) -> set:
        pre = self.state.copy()
        st = self.state
        st.remove_any(x, y)
        for h in h_sub:
            if h in st.nb[y]:
                st.orient(y, h)
            if h in st.nb[x]:
                st.orient(x, h)
        return self._reclose(pre) | {x, y}

    def _reclose(self, pre: _PdagState) -> set:
        """Extend to a DAG, relabel compelled edges, and report every node
        whose parent or neighbor set changed relative to the pre-move state."""
        pa = _pdag_to_dag(self.state, self.config.tie_salt)
        new = _dag_to_cpdag(pa, self.n)
        modified = {
            v
            for v in range(self.n)
            if pre.pa[v] != new.pa[v] or pre.nb[v] != new.nb[v]
        }
        self.state = new
        return modified

    # ---------------------------------------------------------------- phases
    def _all_insert_candidates(self, check_path: bool) -> dict:
        cand = {}
        for x in range(self.n):
            for y in range(self.n):
                if x == y or self.state.adjacent(x, y):
                    continue
                hit = self.best_insert(x, y, check_path=check_path)
                if hit is not None and hit[0] > _MIN_GAIN:
                    cand[(x, y)] = hit
        return cand

    def forward(self) -> None:
        optimistic = not self.full_refresh
        cand = self._all_insert_candidates(check_path=not optimistic)
        step = 0
        while True:
            if self.full_refresh:
                cand = self._all_insert_candidates(check_path=True)
            move = self._select_insert(cand, validate=optimistic)
            if move is None:
                return
            (x, y), (delta, t_sub) = move
            modified = self.apply_insert(x, y, t_sub)
            step += 1
            self.trace.append(
                {
                    "step": step,
                    "phase": "forward",
                    "move": "insert",
                    "x": x,
                    "y": y,
                    "set": [int(t) for t in t_sub],
                    "bic_delta": float(delta - self.prior_delta[x, y]),
                    "prior_delta": float(self.prior_delta[x, y]),
                    "total_delta": float(delta),
                }
            )
            if optimistic:
                self._refresh(cand, modified)

    def _refresh(self, cand: dict, nodes: set) -> None:
        for v in nodes:
            for u in range(self.n):
                if u == v:
                    continue
                for pair in ((u, v), (v, u)):
                    if self.state.adjacent(*pair):
                        cand.pop(pair, None)
                        continue
                    hit = self.best_insert(*pair, check_path=False)
                    if hit is None or hit[0] <= _MIN_GAIN:
                        cand.pop(pair, None)
                    else:
                        cand[pair] = hit

    def _select_insert(self, cand: dict, validate: bool):
        """Best positive candidate by (delta, lexicographic pair).  Optimistic
        candidates are re-validated against the live graph; the scan repeats
        until a validated winner (or no positive candidate) remains."""
        while True:
            best_pair = None
            best = None
            for pair, entry in cand.items():
                if entry[0] <= _MIN_GAIN:
                    continue
                if (
                    best is None
                    or entry[0] > best[0]
                    or (entry[0] == best[0] and pair < best_pair)
                ):
                    best_pair, best = pair, entry
            if best_pair is None:
                return None
            if not validate:
                return best_pair, best
            fresh = self.best_insert(*best_pair, check_path=True)
            if fresh is not None and fresh == best:
                return best_pair, fresh
            if fresh is None or fresh[0] <= _MIN_GAIN:
                # invalid or unprofitable under the live graph: drop it; a
                # later refresh of either endpoint will re-add the pair
                cand.pop(best_pair)
            else:
                cand[best_pair] = fresh

    def backward(self) -> None:
        step = 0
        while True:
            best = None
            best_edge = None
            for x, y in self._deletable_edges():
                hit = self.best_delete(x, y)
                if hit is not None and hit[0] > _MIN_GAIN:
                    if best is None or hit[0] > best[0]:
                        best, best_edge = hit, (x, y)
            if best_edge is None:
                return
            (x, y), (delta, h_sub) = best_edge, best
            self.apply_delete(x, y, h_sub)
            step += 1
            self.trace.append(
                {
                    "step": step,
                    "phase": "backward",
                    "move": "delete",
                    "x": x,
                    "y": y,
                    "set": [int(h) for h in h_sub],
                    "bic_delta": float(delta + self.prior_delta[x, y]),
                    "prior_delta": float(-self.prior_delta[x, y]),
                    "total_delta": float(delta),
                }
            )

    def _deletable_edges(self) -> list[tuple[int, int]]:
        out = list(self.state.directed_edges())
        for x, y in self.state.undirected_edges():
            out.append((x, y))
            out.append((y, x))
        return sorted(out)


def fit_fges(
    stats: SufficientStats, config: FgesConfig, trace: list | None = None
) -> Cpdag:
    """Two-phase greedy equivalence search; returns the completed PDAG.

    Deterministic for fixed stats and config: tie-breaks are lexicographic on
    the ordered node pair.  Pass a list as `trace` to collect one record per
    applied move (step, move, bic_delta, prior_delta).
    """
    if config.prior is not None and config.prior.n != stats.n:
        raise ValueError("prior size mismatch")
    search = _GesSearch(stats, config)
    search.forward()
    search.backward()
    if trace is not None:
        trace.extend(search.trace)
    return search.state.to_cpdag()
