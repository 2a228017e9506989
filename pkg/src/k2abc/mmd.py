"""Squared MMD estimators and the exponentiated-MMD similarity on distributions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import RffFeatureMap, as_dataset

# Above this many terms, Gram sums switch from numpy pairwise summation to
# exactly rounded math.fsum.
COMPENSATED_SUM_MIN = 1_000_000

VARIANTS = ("quadratic_unbiased", "linear_cyclic", "random_features")


def _sum(a: np.ndarray) -> float:
    if a.size >= COMPENSATED_SUM_MIN:
        return math.fsum(a.ravel())
    return float(np.sum(a, dtype=np.float64))


def _pair(x, y, min_n: int):
    x, y = as_dataset(x), as_dataset(y)
    if x.shape[0] < min_n or y.shape[0] < min_n:
        raise ValueError(f"need at least {min_n} observations per dataset, got {x.shape[0]} and {y.shape[0]}")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    return x, y


def mmd2_unbiased(x, y, kernel) -> float:
    """Unbiased quadratic-time estimate of MMD^2; can be negative."""
    x, y = _pair(x, y, 2)
    nx, ny = x.shape[0], y.shape[0]
    kxx = kernel.gram(x, x)
    kyy = kernel.gram(y, y)
    kxy = kernel.gram(x, y)
    sxx = _sum(kxx) - _sum(np.diagonal(kxx))
    syy = _sum(kyy) - _sum(np.diagonal(kyy))
    return sxx / (nx * (nx - 1)) + syy / (ny * (ny - 1)) - 2.0 * _sum(kxy) / (nx * ny)


def mmd2_linear(x, y, kernel) -> float:
    """Linear-time MMD^2 estimate with a cyclic shift through the smaller set.

    Consecutive observations are paired within each dataset, and the cross
    term pairs ``x[i mod n_x]`` with ``y[i]`` for all i < n_y. The order of
    observations matters; shuffle beforehand if the data are not exchangeable.
    """
    x, y = _pair(x, y, 2)
    if x.shape[0] > y.shape[0]:
        x, y = y, x
    nx, ny = x.shape[0], y.shape[0]
    within_x = _sum(kernel.paired(x[:-1], x[1:])) / (nx - 1)
    within_y = _sum(kernel.paired(y[:-1], y[1:])) / (ny - 1)
    x_cyc = x[np.arange(ny) % nx]
    cross = _sum(kernel.paired(x_cyc, y)) / ny
    return within_x + within_y - 2.0 * cross


def mmd2_rff(x, y, fmap: RffFeatureMap) -> float:
    """Biased MMD^2 between random-feature mean embeddings; always >= 0."""
    x, y = _pair(x, y, 1)
    diff = fmap(x).mean(axis=0) - fmap(y).mean(axis=0)
    return float(np.dot(diff, diff))


def mmd2_biased(x, y, kernel) -> float:
    """V-statistic ``|mu_x - mu_y|^2`` from full Gram sums (includes diagonals)."""
    x, y = _pair(x, y, 1)
    return (
        _sum(kernel.gram(x, x)) / x.shape[0] ** 2
        + _sum(kernel.gram(y, y)) / y.shape[0] ** 2
        - 2.0 * _sum(kernel.gram(x, y)) / (x.shape[0] * y.shape[0])
    )


def kappa_epsilon(mmd2: float, epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return math.exp(-mmd2 / epsilon)


@dataclass(frozen=True)
class MmdEstimator:
    """Choice of MMD^2 estimator; ``rff_map`` is required for random features."""

    variant: str = "quadratic_unbiased"
    rff_map: RffFeatureMap | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown MMD estimator {self.variant!r}; expected one of {VARIANTS}")
        if (self.variant == "random_features") != (self.rff_map is not None):
            raise ValueError("rff_map must be given exactly when variant is 'random_features'")

    def __call__(self, x, y, kernel) -> float:
        if self.variant == "quadratic_unbiased":
            return mmd2_unbiased(x, y, kernel)
        if self.variant == "linear_cyclic":
            return mmd2_linear(x, y, kernel)
        return mmd2_rff(x, y, self.rff_map)


MmdEstimatorChoice = MmdEstimator
