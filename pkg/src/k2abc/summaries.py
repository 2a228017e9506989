"""Hand-crafted summary statistics and a histogram distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUMMARY_VARIANTS = ("mean_var", "blowfly10", "raw_quadratic")


def _series(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise ValueError(f"expected a scalar series, got shape {y.shape}")
    return y


def mean_var_stats(y) -> np.ndarray:
    """Sample mean and unbiased sample variance."""
    y = _series(y)
    if y.size < 2:
        raise ValueError(f"mean/variance statistics need n >= 2, got {y.size}")
    m = y.mean()
    r = y - m
    return np.array([m, (r @ r) / (y.size - 1)])


def _quartile_means(v: np.ndarray) -> np.ndarray:
    parts = np.array_split(np.sort(v, kind="stable"), 4)
    if any(p.size == 0 for p in parts):
        raise ValueError(f"series too short for four quartile segments (length {v.size})")
    return np.array([p.mean() for p in parts])


def moving_average(y, window: int) -> np.ndarray:
    """Centered moving average over full windows only (length T - window + 1)."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be a positive odd integer, got {window}")
    y = _series(y)
    if y.size < window:
        return y.copy()
    c = np.cumsum(np.concatenate(([0.0], y)))
    return (c[window:] - c[:-window]) / window


def count_peaks(s, threshold: float) -> int:
    """Number of strict interior local maxima of s that exceed threshold."""
    s = np.asarray(s, dtype=float)
    if s.size < 3:
        return 0
    mid = s[1:-1]
    return int(np.count_nonzero((mid > s[:-2]) & (mid > s[2:]) & (mid > threshold)))


def blowfly_stats(y, window: int = 5, thresholds=None, relative=(0.5, 1.0),
                  log_floor: float = 1e-8) -> np.ndarray:
    """Ten statistics of a population time series.

    0-3: log of the quartile-segment means of N/1000
    4-7: quartile-segment means of the first differences of N/1000
    8-9: peak counts of the smoothed series above two thresholds

    Thresholds are absolute when given; otherwise they are ``relative``
    multiples of the series' own mean.
    """
    y = _series(y)
    if y.size < 5:
        raise ValueError(f"blowfly statistics need T >= 5, got {y.size}")
    scaled = y / 1000.0
    level = _quartile_means(scaled)
    level = np.log(np.where(level > 0, level, log_floor))
    diffs = _quartile_means(np.diff(scaled))
    if thresholds is None:
        thresholds = tuple(r * y.mean() for r in relative)
    smooth = moving_average(y, window)
    peaks = [count_peaks(smooth, th) for th in thresholds]
    return np.concatenate([level, diffs, peaks]).astype(float)


def raw_quadratic_stats(y) -> np.ndarray:
    y = _series(y)
    if y.size < 1:
        raise ValueError("series must be nonempty")
    return np.concatenate([y, y * y])


def with_squares(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.concatenate([s, s * s])


def histogram_distance(a, b, bins: int = 10) -> float:
    """Euclidean distance between proportion histograms on shared equal-width bins."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("histogram distance needs nonempty datasets")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if not hi > lo:
        return 0.0
    ha, _ = np.histogram(a, bins=bins, range=(lo, hi))
    hb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    return float(np.linalg.norm(ha / a.size - hb / b.size))


@dataclass(frozen=True)
class SummarySpec:
    """Configured summary statistic, callable on a dataset.

    ``thresholds`` pins the blowfly peak thresholds; use :meth:`resolved` to
    fix them from an observed series so every pseudo dataset is compared on
    the same scale.
    """

    variant: str = "mean_var"
    window: int = 5
    thresholds: tuple | None = None
    relative: tuple = (0.5, 1.0)
    squares: bool = False

    def __post_init__(self):
        if self.variant not in SUMMARY_VARIANTS:
            raise ValueError(f"unknown summary {self.variant!r}; expected one of {SUMMARY_VARIANTS}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"smoothing window must be a positive odd integer, got {self.window}")
        if self.thresholds is not None:
            object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "relative", tuple(float(r) for r in self.relative))

    def output_dim(self, T: int | None = None) -> int:
        base = {"mean_var": 2, "blowfly10": 10}.get(self.variant)
        if base is None:
            if T is None:
                raise ValueError("raw_quadratic dimension depends on the series length")
            base = 2 * T
        return 2 * base if self.squares else base

    def resolved(self, observed) -> SummarySpec:
        if self.variant != "blowfly10" or self.thresholds is not None:
            return self
        m = float(_series(observed).mean())
        return SummarySpec(self.variant, self.window, tuple(r * m for r in self.relative),
                           self.relative, self.squares)

    def __call__(self, y) -> np.ndarray:
        if self.variant == "mean_var":
            s = mean_var_stats(y)
        elif self.variant == "blowfly10":
            s = blowfly_stats(y, self.window, self.thresholds, self.relative)
        else:
            s = raw_quadratic_stats(y)
        return with_squares(s) if self.squares else s

    def to_dict(self) -> dict:
        return {"variant": self.variant, "window": self.window,
                "thresholds": None if self.thresholds is None else list(self.thresholds),
                "relative": list(self.relative), "squares": self.squares}
