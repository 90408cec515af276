"""Accuracy and reliability metrics for discovered directed connectomes.

Directed conventions are strict throughout: a reversed edge counts as a
false positive of the estimate and a false negative of the truth.  A
skeleton mode is available for undirected comparisons.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats as spstats

from .graphs import BinaryGraph


def _check_same_shape(a: BinaryGraph, b: BinaryGraph) -> None:
    if a.n != b.n:
        raise ValueError(f"node count mismatch: {a.n} vs {b.n}")


def fdr(est: BinaryGraph, truth: BinaryGraph, skeleton: bool = False) -> float:
    """False discovery rate: discovered edges absent from the truth, over all
    discovered edges.  Empty estimates are defined as 0 with a warning."""
    _check_same_shape(est, truth)
    if skeleton:
        est, truth = est.skeleton(), truth.skeleton()
    n_est = est.edge_count
    if n_est == 0:
        warnings.warn("empty estimate: fdr defined as 0")
        return 0.0
    if skeleton:
        fp = int(np.sum(np.triu((est.a == 1) & (truth.a == 0), k=1)))
    else:
        fp = int(np.sum((est.a == 1) & (truth.a == 0)))
    return fp / n_est


def pfdr(est: BinaryGraph, sc: BinaryGraph) -> float:
    """Pseudo FDR: discovered edges whose node pair has no structural
    connection, over all discovered edges.  Computable without ground truth."""
    _check_same_shape(est, sc)
    n_est = est.edge_count
    if n_est == 0:
        warnings.warn("empty estimate: pfdr defined as 0")
        return 0.0
    support = ((sc.a + sc.a.T) > 0)
    fp = int(np.sum((est.a == 1) & ~support))
    return fp / n_est


def shd(est: BinaryGraph, truth: BinaryGraph) -> int:
    """Structural Hamming distance with unit-cost reversals.

    Per unordered pair: 0 if est and truth place the same edge (or both
    none), 1 otherwise (missing, extra, or reversed).
    """
    _check_same_shape(est, truth)
    diff = 0
    e, t = est.a, truth.a
    n = est.n
    for i in range(n):
        for j in range(i + 1, n):
            same = e[i, j] == t[i, j] and e[j, i] == t[j, i]
            if not same:
                diff += 1
    return diff


def total_error_pct(est: BinaryGraph, truth: BinaryGraph) -> float:
    """(false positives + false negatives) / discovered edges; may exceed 1."""
    _check_same_shape(est, truth)
    n_est = est.edge_count
    if n_est == 0:
        raise ValueError("total error undefined for an empty estimate")
    fp = int(np.sum((est.a == 1) & (truth.a == 0)))
    fn = int(np.sum((truth.a == 1) & (est.a == 0)))
    return (fp + fn) / n_est


def rogers_tanimoto_per_edge(occ_a: np.ndarray, occ_b: np.ndarray) -> float:
    """Rogers-Tanimoto dissimilarity between two binary occurrence vectors.

    With a = #(1,1), d = #(0,0), b = #(1,0), c = #(0,1):
    2(b + c) / (a + d + 2(b + c)).  Zero when the vectors agree everywhere,
    in particular for an edge absent (or present) in every subject.
    """
    occ_a = np.asarray(occ_a, dtype=int)
    occ_b = np.asarray(occ_b, dtype=int)
    if occ_a.shape != occ_b.shape or occ_a.ndim != 1 or occ_a.size == 0:
        raise ValueError("occurrence vectors must be 1-D, nonempty, equal length")
    agree = int(np.sum(occ_a == occ_b))
    disagree = occ_a.size - agree
    return 2 * disagree / (agree + 2 * disagree)


def proportion_test_per_edge(
    count_a: int, n_a: int, count_b: int, n_b: int, alpha: float = 0.05
) -> tuple[float, bool]:
    """Two-sample pooled z-test for equality of two edge proportions.

    Returns (z, significant).  z is defined as 0 when the pooled proportion
    is 0 or 1 (no variance to test against).
    """
    for count, total in ((count_a, n_a), (count_b, n_b)):
        if total < 1 or not 0 <= count <= total:
            raise ValueError(f"invalid counts: {count}/{total}")
    p_a, p_b = count_a / n_a, count_b / n_b
    pooled = (count_a + count_b) / (n_a + n_b)
    if pooled in (0.0, 1.0):
        return 0.0, False
    se = np.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
    z = (p_a - p_b) / se
    crit = spstats.norm.ppf(1.0 - alpha / 2.0)
    return float(z), bool(abs(z) > crit)


def proportion_test_map(
    counts_a: np.ndarray,
    n_a: int,
    counts_b: np.ndarray,
    n_b: int,
    alpha: float = 0.05,
) -> tuple[np.ndarray, dict[tuple[int, int], bool]]:
    """Per-edge proportion tests between two methods' occurrence counts.

    Inputs are n x n matrices counting, per directed edge, the subjects whose
    connectome contains it.  Returns the z-value matrix (writable as a graph
    CSV) and the significance verdicts for edges discovered by either method.
    """
    counts_a = np.asarray(counts_a)
    counts_b = np.asarray(counts_b)
    if counts_a.shape != counts_b.shape:
        raise ValueError("count matrices must share a shape")
    z_map = np.zeros(counts_a.shape, dtype=float)
    verdicts: dict[tuple[int, int], bool] = {}
    for i, j in zip(*np.nonzero((counts_a + counts_b) > 0)):
        z, sig = proportion_test_per_edge(
            int(counts_a[i, j]), n_a, int(counts_b[i, j]), n_b, alpha
        )
        z_map[i, j] = z
        verdicts[(int(i), int(j))] = sig
    return z_map, verdicts


def sc_partitioned_disagreement(
    significance: dict[tuple[int, int], bool], sc: BinaryGraph
) -> tuple[float, float]:
    """Fractions of significantly different edges among structurally connected
    and unconnected pairs.

    `significance` maps each candidate directed edge (discovered by at least
    one method in at least one subject) to its test outcome.  A side with no
    candidates yields 0.
    """
    support = ((sc.a + sc.a.T) > 0)
    sig_on = tot_on = sig_off = tot_off = 0
    for (i, j), is_sig in significance.items():
        if not (0 <= i < sc.n and 0 <= j < sc.n):
            raise ValueError(f"edge ({i}, {j}) outside graph of size {sc.n}")
        if support[i, j]:
            tot_on += 1
            sig_on += bool(is_sig)
        else:
            tot_off += 1
            sig_off += bool(is_sig)
    frac_on = sig_on / tot_on if tot_on else 0.0
    frac_off = sig_off / tot_off if tot_off else 0.0
    return frac_on, frac_off


def pearson_correlation(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError("series must be 1-D, equal length >= 2")
    if xs.std() == 0.0 or ys.std() == 0.0:
        raise ValueError("correlation undefined for a constant series")
    return float(np.corrcoef(xs, ys)[0, 1])


@dataclass
class MetricsReport:
    """One evaluation record: a method applied to one subject at one edge count."""

    method: str
    subject: str
    k: int | None = None
    fdr: float | None = None
    pfdr: float | None = None
    shd: int | None = None
    total_error_pct: float | None = None
    lam: float | None = None
    seed: int | None = None

    FIELDS = ("method", "subject", "k", "fdr", "pfdr", "shd", "total_error_pct", "lam", "seed")

    def __post_init__(self):
        for name in ("fdr", "pfdr"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 1.0:
                raise ValueError(f"{name}={val} outside [0, 1]")
        if self.shd is not None and self.shd < 0:
            raise ValueError("shd must be nonnegative")

    def as_row(self) -> list[str]:
        out = []
        for name in self.FIELDS:
            val = getattr(self, name)
            out.append("" if val is None else repr(val) if isinstance(val, float) else str(val))
        return out

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}
