"""Structural-connectivity priors built from streamline-count matrices.

The probabilistic prior is a row normalization of (optionally volume
adjusted) streamline counts; the binary structural graph used by the pseudo
FDR is a per-subject quantile binarization followed by majority voting.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import PRIOR_FLOOR, BinaryGraph, PriorMatrix


@dataclass(frozen=True)
class StreamlineCounts:
    """Nonnegative seed-to-target streamline counts; the diagonal is ignored."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("counts must be a square matrix")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("counts must be finite and nonnegative")
        np.fill_diagonal(c, 0.0)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return self.counts.shape[0]


def probabilistic_sc(
    counts: StreamlineCounts, volumes: np.ndarray | None = None
) -> PriorMatrix:
    """Row-normalized streamline counts as directed edge probabilities.

    When region volumes are given, column j is divided by volume_j before the
    row normalization.  Rows without any positive entry map to the floor.
    """
    c = counts.counts.copy()
    if volumes is not None:
        vol = np.asarray(volumes, dtype=float).reshape(-1)
        if vol.shape[0] != counts.n or np.any(vol <= 0):
            raise ValueError("volumes must be positive, one per region")
        c = c / vol[np.newaxis, :]
    row_sums = c.sum(axis=1)
    p = np.zeros_like(c)
    positive = row_sums > 0
    p[positive] = c[positive] / row_sums[positive, np.newaxis]
    return PriorMatrix(p)


def symmetric_edge_prob(p: PriorMatrix, kappa: float = 1.0) -> PriorMatrix:
    """Pairwise existence probability: the mean of the two directions, scaled
    by a calibration factor and capped below 1."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    sym = kappa * (p.p + p.p.T) / 2.0
    return PriorMatrix(np.clip(sym, 0.0, 1.0 - PRIOR_FLOOR))


def binarize_subject_sc(
    counts: StreamlineCounts, quantile: float = 0.5, mode: str = "quantile"
) -> BinaryGraph:
    """Binarize one subject's counts into an undirected structural graph.

    Pair value = max of the two directions.  In "quantile" mode a pair is
    kept iff its value strictly exceeds the given quantile of the positive
    pair values; "max_fraction" keeps pairs strictly above quantile * max.
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    sym = np.maximum(counts.counts, counts.counts.T)
    iu, ju = np.triu_indices(counts.n, k=1)
    vals = sym[iu, ju]
    pos = vals[vals > 0]
    if pos.size == 0:
        warnings.warn("all-zero streamline matrix: empty binary graph")
        return BinaryGraph(np.zeros_like(sym, dtype=np.int8), directed=False)
    if mode == "quantile":
        thresh = float(np.quantile(pos, quantile))
    elif mode == "max_fraction":
        thresh = quantile * float(pos.max())
    else:
        raise ValueError(f"unknown mode {mode!r}")
    a = (sym > thresh).astype(np.int8)
    np.fill_diagonal(a, 0)
    return BinaryGraph(a, directed=False)


def majority_vote(graphs: list[BinaryGraph]) -> BinaryGraph:
    """Entry = 1 iff strictly more than half of the subjects have a 1."""
    if not graphs:
        raise ValueError("need at least one graph")
    n = graphs[0].n
    directed = graphs[0].directed
    for g in graphs:
        if g.n != n:
            raise ValueError("all graphs must share the same node count")
    votes = np.zeros((n, n), dtype=np.int64)
    for g in graphs:
        votes += g.a
    a = (votes * 2 > len(graphs)).astype(np.int8)
    return BinaryGraph(a, directed=directed)


def leave_one_out_sc(graphs: list[BinaryGraph], exclude: int) -> BinaryGraph:
    """Majority vote over all subjects except the excluded one."""
    if not 0 <= exclude < len(graphs):
        raise ValueError(f"exclude index {exclude} out of range")
    rest = [g for i, g in enumerate(graphs) if i != exclude]
    if not rest:
        raise ValueError("cannot exclude the only subject")
    return majority_vote(rest)
