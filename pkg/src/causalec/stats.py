"""Sufficient statistics for Gaussian scoring: sample count plus second moments."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SufficientStats:
    """Second-moment matrix of the (optionally standardized) observations.

    `corr` is the correlation matrix when the data were standardized and the
    covariance matrix when they were only centered.  Everything downstream
    (likelihoods, regressions) is a function of (m, corr) alone.
    """

    m: int
    corr: np.ndarray

    def __post_init__(self):
        c = np.array(self.corr, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("corr must be square")
        if not np.allclose(c, c.T, atol=1e-10):
            raise ValueError("corr must be symmetric")
        c = (c + c.T) / 2.0
        c.setflags(write=False)
        object.__setattr__(self, "corr", c)

    @property
    def n(self) -> int:
        return self.corr.shape[0]

    @classmethod
    def from_data(
        cls, x: np.ndarray, standardize: bool = True, center: bool = True
    ) -> "SufficientStats":
        """Build stats from an (m, n) observation matrix.

        Standardization divides each column by its population standard
        deviation; centering subtracts the column mean.  A warning is issued
        when m < n because the second-moment matrix is then rank deficient.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ValueError("data must be 2-D (rows = observations)")
        m, n = x.shape
        if m < 2:
            raise ValueError("need at least 2 observations")
        if m < n:
            warnings.warn(f"m={m} < n={n}: second-moment matrix is rank deficient")
        if center:
            x = x - x.mean(axis=0)
        if standardize:
            sd = x.std(axis=0)
            sd[sd == 0.0] = 1.0
            x = x / sd
        return cls(m=m, corr=(x.T @ x) / m)


def standardize_columns(x: np.ndarray) -> np.ndarray:
    """Center each column and scale it to unit population variance."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0.0] = 1.0
    return x / sd
