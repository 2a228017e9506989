"""Kernels on observation space, bandwidth selection and random Fourier features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .streams import as_generator

MEDIAN_MAX_POINTS = 5000


def as_dataset(y) -> np.ndarray:
    """Return observations as a float array of shape (n, d).

    A 1-d input is read as n scalar observations.
    """
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise ValueError(f"dataset must be 1-d or 2-d, got shape {arr.shape}")
    return arr


def _sqdist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape[1] == 1:
        diff = x[:, 0][:, None] - y[:, 0][None, :]
        return diff * diff
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass(frozen=True)
class GaussianKernel:
    """Gaussian RBF kernel ``exp(-|a - b|^2 / (2 gamma^2))``.

    Any kernel used by :mod:`k2abc.mmd` needs ``gram`` and ``paired``;
    ``spectral_frequencies`` is only needed for random features.
    """

    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not np.isfinite(g) or g <= 0:
            raise ValueError(f"kernel bandwidth gamma must be positive and finite, got {self.gamma}")
        object.__setattr__(self, "gamma", g)

    def __call__(self, a, b) -> float:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.shape != b.shape:
            raise ValueError(f"dimension mismatch: a has dimension {a.shape[0]}, b has dimension {b.shape[0]}")
        diff = a - b
        return float(np.exp(-np.dot(diff, diff) / (2.0 * self.gamma**2)))

    def gram(self, x, y) -> np.ndarray:
        x, y = as_dataset(x), as_dataset(y)
        _check_dims(x, y)
        return np.exp(_sqdist(x, y) / (-2.0 * self.gamma**2))

    def paired(self, x, y) -> np.ndarray:
        """Row-wise values k(x_i, y_i) for equally long x and y."""
        x, y = as_dataset(x), as_dataset(y)
        _check_dims(x, y)
        diff = x - y
        return np.exp(np.einsum("ij,ij->i", diff, diff) / (-2.0 * self.gamma**2))

    def spectral_frequencies(self, d: int, D: int, rng) -> np.ndarray:
        # Fourier transform of the RBF kernel is N(0, gamma^-2 I).
        return as_generator(rng).normal(0.0, 1.0 / self.gamma, size=(D, d))


KernelConfig = GaussianKernel


def _check_dims(x: np.ndarray, y: np.ndarray):
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")


def gaussian_kernel(a, b, cfg: GaussianKernel) -> float:
    return cfg(a, b)


def median_heuristic(y, rng=None, max_points: int = MEDIAN_MAX_POINTS) -> float:
    """Median of pairwise Euclidean distances over distinct pairs i < j.

    Datasets larger than ``max_points`` are subsampled without replacement
    using ``rng`` (seed 0 when not given), so the result stays reproducible.
    """
    y = as_dataset(y)
    if y.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 observations")
    if y.shape[0] > max_points:
        idx = as_generator(0 if rng is None else rng).choice(y.shape[0], size=max_points, replace=False)
        y = y[np.sort(idx)]
    med = float(np.median(pdist(y)))
    if med <= 0:
        raise ValueError("median pairwise distance is zero; bandwidth would be 0")
    return med


@dataclass(frozen=True)
class RffFeatureMap:
    """Random Fourier feature map ``sqrt(2/D) cos(W x + b)``.

    Attributes:
        frequencies: (D, d) array of spectral draws.
        phases: (D,) array of offsets in [0, 2 pi).
    """

    frequencies: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        b = np.asarray(self.phases, dtype=float).ravel()
        if w.shape[0] < 1 or w.shape[0] != b.shape[0]:
            raise ValueError(f"need D >= 1 frequencies matching phases, got {w.shape[0]} and {b.shape[0]}")
        if np.any(b < 0) or np.any(b >= 2 * np.pi):
            raise ValueError("phases must lie in [0, 2 pi)")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "phases", b)

    @property
    def num_features(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    def __call__(self, x) -> np.ndarray:
        """Features of a dataset, shape (n, D)."""
        x = as_dataset(x)
        if x.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: input has {x.shape[1]}, feature map expects {self.dim}")
        return np.sqrt(2.0 / self.num_features) * np.cos(x @ self.frequencies.T + self.phases)


def sample_rff(cfg: GaussianKernel, d: int, D: int, rng) -> RffFeatureMap:
    if d < 1 or D < 1:
        raise ValueError(f"need d >= 1 and D >= 1, got d={d}, D={D}")
    rng = as_generator(rng)
    w = cfg.spectral_frequencies(d, D, rng)
    b = rng.uniform(0.0, 2 * np.pi, size=D)
    return RffFeatureMap(w, b)


def rff_features(x, fmap: RffFeatureMap) -> np.ndarray:
    """Feature vector of a single point x (length D)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError("rff_features takes a single d-vector; call the map on datasets")
    if x.shape[0] != fmap.dim:
        raise ValueError(f"dimension mismatch: x has {x.shape[0]}, feature map expects {fmap.dim}")
    return fmap(x[None, :])[0]
