"""Synthetic benchmark generation: scale-free DAGs, prior-constrained DAGs,
linear structural-equation samples, and haemodynamically convolved series
with known ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as spstats

from .graphs import BinaryGraph, PriorMatrix, WeightedAdjacency, topological_order


def _rng_from(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def derive_seed(base: int, *key) -> int:
    """Stable per-stage/per-subject seed derived from a base seed and a key."""
    ss = np.random.SeedSequence((int(base),) + tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


def generate_scale_free_dag(n: int, degree: int, seed) -> BinaryGraph:
    """Preferential-attachment DAG over a random node ordering.

    Node t in the ordering attaches to min(t, degree) distinct earlier nodes
    sampled proportionally to (current degree + 1); edges point from earlier
    to later, so the result is acyclic with about degree * n edges.
    """
    if not n > degree >= 1:
        raise ValueError(f"need n > degree >= 1, got n={n}, degree={degree}")
    rng = _rng_from(seed)
    order = rng.permutation(n)
    deg = np.zeros(n, dtype=np.int64)  # indexed by position in the ordering
    a = np.zeros((n, n), dtype=np.int8)
    for t in range(1, n):
        k = min(t, degree)
        weights = deg[:t] + 1.0
        targets: list[int] = []
        for _ in range(k):
            probs = weights / weights.sum()
            pick = int(rng.choice(t, p=probs))
            targets.append(pick)
            weights[pick] = 0.0
        for s in targets:
            a[order[s], order[t]] = 1
            deg[s] += 1
        deg[t] += k
    return BinaryGraph(a)


def sample_dag_from_prior(prior: PriorMatrix, target_edges: int, seed) -> BinaryGraph:
    """Bernoulli-sampled DAG with exactly `target_edges` edges.

    Each unordered pair is drawn with its symmetrized prior probability and
    oriented along a random node ordering.  A deterministic correction fixes
    the count: surplus edges are dropped lowest-probability-first, deficits
    are filled highest-probability-first from the rejected pairs.  Pairs at
    the prior floor never enter through the correction.
    """
    if target_edges < 0:
        raise ValueError("target_edges must be nonnegative")
    n = prior.n
    pair_p = prior.pair_probability()
    support = [
        (i, j) for i in range(n) for j in range(i + 1, n) if pair_p[i, j] > prior.floor
    ]
    if target_edges > len(support):
        raise ValueError(
            f"target_edges={target_edges} unreachable: prior supports only "
            f"{len(support)} pairs (deficit {target_edges - len(support)})"
        )
    rng = _rng_from(seed)
    order = rng.permutation(n)
    position = np.empty(n, dtype=np.int64)
    position[order] = np.arange(n)

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    draws = rng.random(len(pairs))
    accepted = [pq for pq, u in zip(pairs, draws) if u < pair_p[pq]]
    if len(accepted) > target_edges:
        accepted.sort(key=lambda pq: (pair_p[pq], pq[0], pq[1]))
        accepted = accepted[len(accepted) - target_edges:]
    elif len(accepted) < target_edges:
        chosen = set(accepted)
        rejected = [pq for pq in support if pq not in chosen]
        rejected.sort(key=lambda pq: (-pair_p[pq], pq[0], pq[1]))
        accepted.extend(rejected[: target_edges - len(accepted)])

    a = np.zeros((n, n), dtype=np.int8)
    for i, j in accepted:
        if position[i] < position[j]:
            a[i, j] = 1
        else:
            a[j, i] = 1
    return BinaryGraph(a)


@dataclass(frozen=True)
class SemSpec:
    """Linear Gaussian structural model: weights on a DAG plus noise scales."""

    dag: BinaryGraph
    weights: WeightedAdjacency
    noise_scale: np.ndarray
    noise_kind: str = "gaussian"

    def __post_init__(self):
        if self.noise_kind != "gaussian":
            raise ValueError("only gaussian noise is supported")
        ns = np.broadcast_to(np.asarray(self.noise_scale, dtype=float), (self.dag.n,)).copy()
        if np.any(ns <= 0):
            raise ValueError("noise_scale must be positive")
        ns.setflags(write=False)
        object.__setattr__(self, "noise_scale", ns)
        if self.weights.n != self.dag.n:
            raise ValueError("weights and dag sizes differ")
        if not np.array_equal(self.weights.w != 0, self.dag.a != 0):
            raise ValueError("weight support must equal the dag edge set")


def random_sem(
    dag: BinaryGraph,
    seed,
    weight_range: tuple[float, float] = (0.5, 2.0),
    noise_scale: float = 1.0,
) -> SemSpec:
    """Draw edge weights uniformly from +-[lo, hi]; magnitudes stay away from 0
    so every edge remains identifiable."""
    lo, hi = weight_range
    if not 0 < lo <= hi:
        raise ValueError("weight_range must satisfy 0 < lo <= hi")
    rng = _rng_from(seed)
    mag = rng.uniform(lo, hi, size=(dag.n, dag.n))
    sign = rng.choice([-1.0, 1.0], size=(dag.n, dag.n))
    w = mag * sign * dag.a
    return SemSpec(dag=dag, weights=WeightedAdjacency(w), noise_scale=noise_scale)


def sample_linear_sem(spec: SemSpec, m: int, seed) -> np.ndarray:
    """m i.i.d. rows of x = w^T x + noise, generated in topological order."""
    order = topological_order(spec.dag.a)
    if order is None:
        raise ValueError("SEM graph must be acyclic")
    n = spec.dag.n
    rng = _rng_from(seed)
    x = np.zeros((m, n))
    noise = rng.standard_normal((m, n)) * spec.noise_scale[np.newaxis, :]
    w = spec.weights.w
    for j in order:
        parents = np.nonzero(w[:, j])[0]
        x[:, j] = noise[:, j]
        if parents.size:
            x[:, j] += x[:, parents] @ w[parents, j]
    return x


def sem_covariance(spec: SemSpec) -> np.ndarray:
    """Closed-form covariance (I - W)^-T D (I - W)^-1 of the linear model."""
    n = spec.dag.n
    inv = np.linalg.inv(np.eye(n) - spec.weights.w)
    d = np.diag(spec.noise_scale**2)
    return inv.T @ d @ inv


@dataclass(frozen=True)
class HrfParams:
    """Double-gamma haemodynamic kernel parameters, in seconds."""

    delay: float = 6.0
    undershoot_delay: float = 16.0
    dispersion: float = 1.0
    undershoot_dispersion: float = 1.0
    undershoot_ratio: float = 1.0 / 6.0
    length: float = 32.0


def hrf_kernel(params: HrfParams, tr_seconds: float) -> np.ndarray:
    """Kernel sampled at the repetition time: peak gamma minus a scaled
    undershoot gamma, over [0, length]."""
    if tr_seconds <= 0:
        raise ValueError("tr_seconds must be positive")
    t = np.arange(0.0, params.length + 1e-9, tr_seconds)
    peak = spstats.gamma.pdf(t, params.delay / params.dispersion, scale=params.dispersion)
    under = spstats.gamma.pdf(
        t, params.undershoot_delay / params.undershoot_dispersion,
        scale=params.undershoot_dispersion,
    )
    return peak - params.undershoot_ratio * under


@dataclass(frozen=True)
class HybridSpec:
    """Recipe for one synthetic subject: a prior-constrained ground-truth DAG
    observed through a linear model and a haemodynamic convolution."""

    prior: PriorMatrix
    target_edges: int
    time_points: int
    tr_seconds: float = 0.72
    hrf: HrfParams = field(default_factory=HrfParams)
    snr: float = 10.0
    standardize: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.time_points <= 0:
            raise ValueError("time_points must be positive")
        if self.target_edges < 0:
            raise ValueError("target_edges must be nonnegative")
        if self.snr <= 0:
            raise ValueError("snr must be positive (use inf for noiseless)")

    @property
    def n(self) -> int:
        return self.prior.n


def synthesize_bold(neural: np.ndarray, spec: HybridSpec) -> np.ndarray:
    """Convolve each column with the haemodynamic kernel and add observation
    noise at the configured signal-to-noise power ratio."""
    neural = np.asarray(neural, dtype=float)
    if neural.ndim != 2 or neural.shape[1] != spec.n:
        raise ValueError("neural matrix must be (time, regions)")
    if neural.shape[0] != spec.time_points:
        raise ValueError(
            f"time mismatch: neural has {neural.shape[0]} rows, spec wants {spec.time_points}"
        )
    kernel = hrf_kernel(spec.hrf, spec.tr_seconds)
    t = spec.time_points
    out = np.empty_like(neural)
    for j in range(neural.shape[1]):
        out[:, j] = np.convolve(neural[:, j], kernel)[:t]
    if np.isfinite(spec.snr):
        rng = _rng_from(derive_seed(spec.rng_seed, 3))
        sd = np.sqrt(out.var(axis=0) / spec.snr)
        out = out + rng.standard_normal(out.shape) * sd[np.newaxis, :]
    return out


def make_hybrid_dataset(spec: HybridSpec) -> tuple[BinaryGraph, np.ndarray]:
    """Ground-truth DAG plus its haemodynamic observations, reproducible from
    the spec seed alone."""
    truth = sample_dag_from_prior(spec.prior, spec.target_edges, derive_seed(spec.rng_seed, 0))
    sem = random_sem(truth, derive_seed(spec.rng_seed, 1))
    neural = sample_linear_sem(sem, spec.time_points, derive_seed(spec.rng_seed, 2))
    bold = synthesize_bold(neural, spec)
    return truth, bold


def corrupt_skeleton_prior(
    truth: BinaryGraph,
    p_true: float = 0.9,
    p_false: float = 0.1,
    flip_fraction: float = 0.05,
    seed=0,
) -> PriorMatrix:
    """Informative-but-imperfect pairwise prior built from a known skeleton.

    Pairs on the true skeleton get probability p_true and the rest p_false,
    then a seeded fraction of all pairs has its assignment flipped.
    """
    if not 0.0 <= flip_fraction <= 1.0:
        raise ValueError("flip_fraction must lie in [0, 1]")
    n = truth.n
    rng = _rng_from(seed)
    on_skeleton = (truth.a + truth.a.T) > 0
    p = np.where(on_skeleton, p_true, p_false)
    iu, ju = np.triu_indices(n, k=1)
    n_pairs = iu.size
    n_flip = int(round(flip_fraction * n_pairs))
    flip_idx = rng.choice(n_pairs, size=n_flip, replace=False)
    for idx in flip_idx:
        i, j = int(iu[idx]), int(ju[idx])
        p[i, j] = p[j, i] = p_false if on_skeleton[i, j] else p_true
    return PriorMatrix(p)


def synthetic_streamline_counts(
    n: int, seed, zero_fraction: float = 0.35, scale: float = 1000.0
) -> np.ndarray:
    """Template streamline-count matrix with a heavy-tailed, distance-decayed
    profile and a controlled fraction of structurally absent pairs."""
    if not 0.0 <= zero_fraction < 1.0:
        raise ValueError("zero_fraction must lie in [0, 1)")
    rng = _rng_from(seed)
    pts = rng.random((n, 2))
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    strength = np.exp(-4.0 * dist) * rng.lognormal(0.0, 1.0, size=(n, n))
    strength = np.maximum(strength, strength.T)
    iu, ju = np.triu_indices(n, k=1)
    vals = strength[iu, ju]
    cutoff = np.quantile(vals, zero_fraction)
    counts = np.where(strength > cutoff, strength * scale, 0.0)
    np.fill_diagonal(counts, 0.0)
    return counts


def subject_streamline_counts(template: np.ndarray, seed, jitter: float = 0.3) -> np.ndarray:
    """Per-subject counts: multiplicative lognormal jitter on the template,
    preserving its zero pattern."""
    rng = _rng_from(seed)
    noise = rng.lognormal(0.0, jitter, size=template.shape)
    noise = np.maximum(noise, noise.T)
    counts = template * noise
    np.fill_diagonal(counts, 0.0)
    return counts
