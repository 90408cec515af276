"""File formats: headerless n x n CSV matrices and JSON manifests.

Every n x n artifact (weights, binary graphs, priors, CPDAGs) is stored as a
plain CSV with no header, one row per source node.  Floats are written with
17 significant digits so that a rerun produces byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graphs import BinaryGraph, Cpdag, PriorMatrix, WeightedAdjacency


def write_matrix(path, mat: np.ndarray, integer: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = "%d" if integer else "%.17g"
    np.savetxt(path, np.asarray(mat), fmt=fmt, delimiter=",")


def read_matrix(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    return arr


def write_weights(path, w: WeightedAdjacency) -> None:
    write_matrix(path, w.w)


def read_weights(path) -> WeightedAdjacency:
    return WeightedAdjacency(read_matrix(path))


def write_graph(path, g: BinaryGraph) -> None:
    write_matrix(path, g.a, integer=True)


def read_graph(path, directed: bool = True) -> BinaryGraph:
    return BinaryGraph(read_matrix(path), directed=directed)


def write_prior(path, p: PriorMatrix) -> None:
    write_matrix(path, p.p)


def read_prior(path) -> PriorMatrix:
    return PriorMatrix(read_matrix(path))


def write_cpdag(path, c: Cpdag) -> None:
    write_matrix(path, c.to_matrix(), integer=True)


def read_cpdag(path) -> Cpdag:
    return Cpdag.from_matrix(read_matrix(path))


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def append_jsonl(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        fh.write(json.dumps(obj, sort_keys=True) + "\n")
