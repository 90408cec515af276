import itertools

import numpy as np
import pytest

from causalec.graphs import BinaryGraph, is_acyclic


def fd_gradient(fun, w, h=1e-5):
    """Central finite differences of a scalar matrix function, off-diagonal only."""
    g = np.zeros_like(w)
    n = w.shape[0]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            wp = w.copy()
            wp[i, j] += h
            wm = w.copy()
            wm[i, j] -= h
            g[i, j] = (fun(wp) - fun(wm)) / (2.0 * h)
    return g


def all_dags(n):
    """Every DAG on n labeled nodes, by filtering all orientation patterns."""
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        a = np.zeros((n, n), dtype=np.int8)
        for b, (i, j) in zip(bits, pairs):
            a[i, j] = b
        if np.any(a * a.T):
            continue
        g = BinaryGraph(a)
        if is_acyclic(g):
            yield g


def brute_force_acyclic(a):
    """Independent oracle: acyclic iff some node permutation makes all edges
    point forward."""
    n = a.shape[0]
    for perm in itertools.permutations(range(n)):
        pos = {v: i for i, v in enumerate(perm)}
        if all(pos[i] < pos[j] for i, j in zip(*np.nonzero(a))):
            return True
    return int(a.sum()) == 0


def random_binary_graph(rng, n, p=0.3, directed=True):
    a = (rng.random((n, n)) < p).astype(np.int8)
    np.fill_diagonal(a, 0)
    if not directed:
        a = np.triu(a, 1)
        a = a + a.T
    return BinaryGraph(a, directed=directed)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
