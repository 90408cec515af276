"""Continuous DAG learner: Gaussian likelihood plus sparsity plus a smooth
acyclicity penalty, minimized by an adaptive-moment first-order method.

The Bayesian variant masks the L1 penalty element-wise by |log prior|, so
edges with a low prior probability pay a much larger sparsity price while
near-certain edges are almost free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .graphs import (
    BinaryGraph,
    PriorMatrix,
    WeightedAdjacency,
    strongly_connected_components,
    threshold_by_edge_count,
    threshold_by_weight,
)
from .stats import SufficientStats


class GolemNumericalError(RuntimeError):
    pass


@dataclass
class GolemConfig:
    variant: str = "ev"  # "ev" (equal noise variances) or "nv"
    lambda_sparse: float = 2e-2
    lambda_dag: float = 5.0
    learning_rate: float = 1e-3
    max_iters: int = 100_000
    convergence_tol: float = 1e-8  # on the gradient infinity norm
    init: np.ndarray | None = None
    standardize: bool = True
    postprocess_threshold: float = 0.3

    def __post_init__(self):
        if self.variant not in ("ev", "nv"):
            raise ValueError("variant must be 'ev' or 'nv'")
        if self.lambda_sparse < 0 or self.lambda_dag < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def golem_likelihood(
    w: np.ndarray | WeightedAdjacency, stats: SufficientStats, variant: str = "ev"
) -> tuple[float, np.ndarray]:
    """Profile Gaussian log-likelihood term and its exact gradient.

    Residual power of column j is the j-th diagonal entry of
    (I - W)^T C (I - W) with C the second-moment matrix.  The equal-variance
    form scores (n/2) log(sum_j power_j) - log|det(I - W)|; the non-equal
    form scores sum_j (1/2) log(power_j) - log|det(I - W)|.
    """
    wm = w.w if isinstance(w, WeightedAdjacency) else np.asarray(w, dtype=float)
    if stats.m < 2:
        raise ValueError("need at least 2 observations")
    n = stats.n
    c = stats.corr
    m_mat = np.eye(n) - wm
    sign, logabsdet = np.linalg.slogdet(m_mat)
    if sign == 0 or not np.isfinite(logabsdet):
        raise GolemNumericalError("non-invertible model: det(I - W) = 0")
    q = c @ m_mat  # C (I - W)
    inv_t = np.linalg.inv(m_mat).T
    if variant == "ev":
        total = float(np.sum(m_mat * q))  # trace((I-W)^T C (I-W))
        if total <= 0:
            raise GolemNumericalError("nonpositive total residual power")
        value = 0.5 * n * np.log(total) - logabsdet
        grad = -n * q / total + inv_t
    elif variant == "nv":
        powers = np.einsum("ij,ij->j", m_mat, q)
        if np.any(powers <= 0):
            raise GolemNumericalError("nonpositive residual power")
        value = 0.5 * float(np.sum(np.log(powers))) - logabsdet
        grad = -q / powers[np.newaxis, :] + inv_t
    else:
        raise ValueError("variant must be 'ev' or 'nv'")
    return float(value), grad


def dag_penalty(w: np.ndarray | WeightedAdjacency) -> tuple[float, np.ndarray]:
    """Smooth acyclicity measure trace(exp(W o W)) - n and its gradient.

    Zero exactly when the support of W is acyclic (W o W is then nilpotent),
    strictly positive otherwise.
    """
    wm = w.w if isinstance(w, WeightedAdjacency) else np.asarray(w, dtype=float)
    n = wm.shape[0]
    e = expm(wm * wm)
    value = float(np.trace(e)) - n
    grad = e.T * (2.0 * wm)
    return value, grad


def _sparsity_coeff(n: int, lam: float, prior: PriorMatrix | None) -> np.ndarray:
    """Per-entry L1 coefficient: lam everywhere, or lam * |log p| with a prior."""
    if prior is None:
        return np.full((n, n), lam)
    if prior.n != n:
        raise ValueError("prior size mismatch")
    return lam * np.abs(np.log(prior.p))


def bgolem_sparsity(
    w: np.ndarray | WeightedAdjacency, prior: PriorMatrix, lam: float
) -> tuple[float, np.ndarray]:
    """Prior-masked L1 penalty lam * sum |log p_ij| |w_ij| with subgradient
    sign(w) * lam * |log p| (0 at w = 0)."""
    wm = w.w if isinstance(w, WeightedAdjacency) else np.asarray(w, dtype=float)
    coeff = _sparsity_coeff(wm.shape[0], lam, prior)
    value = float(np.sum(coeff * np.abs(wm)))
    grad = coeff * np.sign(wm)
    return value, grad


def golem_total_score(
    w: np.ndarray | WeightedAdjacency,
    stats: SufficientStats,
    config: GolemConfig,
    prior: PriorMatrix | None = None,
) -> tuple[float, np.ndarray]:
    """Likelihood + (plain or prior-masked) sparsity + weighted acyclicity."""
    wm = w.w if isinstance(w, WeightedAdjacency) else np.asarray(w, dtype=float)
    value, grad = golem_likelihood(wm, stats, config.variant)
    coeff = _sparsity_coeff(wm.shape[0], config.lambda_sparse, prior)
    value += float(np.sum(coeff * np.abs(wm)))
    grad = grad + coeff * np.sign(wm)
    if config.lambda_dag > 0:
        h, gh = dag_penalty(wm)
        value += config.lambda_dag * h
        grad = grad + config.lambda_dag * gh
    return float(value), grad


def fit_golem(
    x: np.ndarray,
    config: GolemConfig,
    prior: PriorMatrix | None = None,
    info: dict | None = None,
) -> WeightedAdjacency:
    """Minimize the score from the configured initialization with Adam.

    Returns the raw continuous weights (not thresholded).  Deterministic for
    a fixed config and data.  The diagonal is held at zero throughout.  Pass
    a dict as `info` to receive iteration count and final score components.
    """
    stats = SufficientStats.from_data(x, standardize=config.standardize)
    n = stats.n
    if config.init is not None:
        w = np.array(config.init, dtype=float)
        if w.shape != (n, n):
            raise ValueError("init shape mismatch")
    else:
        w = np.zeros((n, n))
    np.fill_diagonal(w, 0.0)

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    mom = np.zeros_like(w)
    vel = np.zeros_like(w)
    diag_mask = ~np.eye(n, dtype=bool)
    coeff = _sparsity_coeff(n, config.lambda_sparse, prior)
    recent: list[float] = []
    grad_norm = np.inf
    iters = 0
    for t in range(1, config.max_iters + 1):
        value, grad = golem_likelihood(w, stats, config.variant)
        value += float(np.sum(coeff * np.abs(w)))
        grad = grad + coeff * np.sign(w)
        if config.lambda_dag > 0:
            h, gh = dag_penalty(w)
            value += config.lambda_dag * h
            grad = grad + config.lambda_dag * gh
        if not np.isfinite(value):
            raise GolemNumericalError(
                f"score diverged at iteration {t}; recent values: {recent[-5:]}"
            )
        recent.append(value)
        if len(recent) > 10:
            recent.pop(0)
        grad *= diag_mask
        grad_norm = float(np.max(np.abs(grad)))
        iters = t
        if grad_norm <= config.convergence_tol:
            break
        mom = beta1 * mom + (1.0 - beta1) * grad
        vel = beta2 * vel + (1.0 - beta2) * grad * grad
        m_hat = mom / (1.0 - beta1**t)
        v_hat = vel / (1.0 - beta2**t)
        w = w - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        np.fill_diagonal(w, 0.0)

    if info is not None:
        lik, _ = golem_likelihood(w, stats, config.variant)
        spars = float(np.sum(_sparsity_coeff(n, config.lambda_sparse, prior) * np.abs(w)))
        h, _ = dag_penalty(w)
        info.update(
            iterations=iters,
            grad_inf_norm=grad_norm,
            likelihood=lik,
            sparsity=spars,
            dag_penalty=h,
            total=lik + spars + config.lambda_dag * h,
        )
    return WeightedAdjacency(w)


def postprocess_golem(
    w: WeightedAdjacency, tau: float | None = None, k: int | None = None
) -> BinaryGraph:
    """Threshold the continuous weights, then break any remaining cycles by
    repeatedly dropping the smallest-magnitude edge inside a cycle."""
    if (tau is None) == (k is None):
        raise ValueError("give exactly one of tau or k")
    g = threshold_by_weight(w, tau) if k is None else threshold_by_edge_count(w, k)
    a = np.array(g.a)
    absw = np.abs(w.w)
    while True:
        comps = [c for c in strongly_connected_components(a) if len(c) > 1]
        if not comps:
            break
        best = None
        for comp in comps:
            for i in comp:
                for j in comp:
                    if a[i, j]:
                        key = (absw[i, j], i, j)
                        if best is None or key < best:
                            best = key
        _, bi, bj = best
        a[bi, bj] = 0
    return BinaryGraph(a)
