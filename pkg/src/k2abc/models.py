"""Priors and simulators for the uniform-mixture toy model and blowfly dynamics.

A simulator is any callable ``simulator(theta, rng) -> ndarray`` returning a
pseudo dataset. Simulators signal numerically divergent parameters by raising
:class:`SimulationDivergence`.
"""
from __future__ import annotations

import json
import math
from dataclasses import astuple, dataclass, field
from importlib import resources

import numpy as np

from .streams import as_generator

THETA_STAR = (0.25, 0.04, 0.33, 0.04, 0.34)
BLOWFLY_NAMES = ("P", "N0", "sigma_d", "sigma_p", "tau", "delta")


class SimulationDivergence(RuntimeError):
    """Raised when a simulated trajectory leaves the representable range."""


# -- distributions -----------------------------------------------------------

def sample_dirichlet(conc, rng) -> np.ndarray:
    """Dirichlet draw via normalized independent Gamma(conc_i, 1) variates."""
    conc = np.asarray(conc, dtype=float)
    if conc.ndim != 1 or conc.size < 1 or np.any(~(conc > 0)):
        raise ValueError(f"Dirichlet concentrations must all be positive, got {conc}")
    g = as_generator(rng).standard_gamma(conc)
    total = g.sum()
    if total <= 0:
        # all gammas underflowed (tiny concentrations); mass goes to the largest
        g = np.zeros_like(conc)
        g[np.argmax(conc)] = 1.0
        total = 1.0
    theta = g / total
    return theta / theta.sum()


def sample_gamma(shape: float, scale: float, rng) -> float:
    if not (shape > 0 and scale > 0):
        raise ValueError(f"Gamma shape and scale must be positive, got shape={shape}, scale={scale}")
    return float(as_generator(rng).gamma(shape, scale))


# -- uniform mixture ---------------------------------------------------------

@dataclass(frozen=True)
class MixtureParams:
    theta: tuple

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if t.shape != (5,):
            raise ValueError(f"mixture needs 5 proportions, got shape {t.shape}")
        if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture proportions must be nonnegative and sum to 1, got {t.tolist()}")
        object.__setattr__(self, "theta", tuple(float(v) for v in t))


def simulate_mixture(params, n: int, rng) -> np.ndarray:
    """n draws from sum_i theta_i Uniform[i-1, i), i = 1..5."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    theta = np.asarray(params.theta if isinstance(params, MixtureParams) else params, dtype=float)
    rng = as_generator(rng)
    k = len(theta)
    cdf = np.cumsum(theta)
    cdf /= cdf[-1]
    comp = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), k - 1)
    return comp + rng.random(n)


@dataclass(frozen=True)
class MixtureSimulator:
    n: int = 400

    def __call__(self, theta, rng) -> np.ndarray:
        return simulate_mixture(theta, self.n, rng)


# -- blowfly -----------------------------------------------------------------

@dataclass(frozen=True)
class BlowflyParams:
    P: float
    N0: float
    sigma_d: float
    sigma_p: float
    tau: float
    delta: float

    def __post_init__(self):
        for name, v in zip(BLOWFLY_NAMES, astuple(self)):
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"blowfly parameter {name} must be positive and finite, got {v}")

    @classmethod
    def from_vector(cls, v) -> BlowflyParams:
        return cls(*(float(x) for x in v))

    def to_vector(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @property
    def lag(self) -> int:
        return max(1, int(round(self.tau)))


def simulate_blowfly(params, T: int, rng, init: float | np.ndarray = 180.0,
                     cap: float = 1e12, noise: bool = True) -> np.ndarray:
    """Simulate T steps of the delayed stochastic population recursion

        N[t+1] = P N[t-L] exp(-N[t-L] / N0) e[t] + N[t] exp(-delta eps[t])

    with lag L = max(1, round(tau)), e ~ Gam(1/sp^2, sp^2) and
    eps ~ Gam(1/sd^2, sd^2). Per step, e is drawn before eps.

    Args:
        params: BlowflyParams or its 6-vector (P, N0, sigma_d, sigma_p, tau, delta).
        T: number of returned time points N[1..T].
        rng: seed or Generator.
        init: history N[-L..0]; a scalar fills it, an array supplies the last
            L+1 values (e.g. the first observations of a real series).
        cap: population above which the run is declared divergent.
        noise: when False both noise terms are fixed at their mean 1.

    Raises:
        SimulationDivergence: a value exceeds ``cap`` or becomes non-finite.
    """
    if not isinstance(params, BlowflyParams):
        params = BlowflyParams.from_vector(params)
    lag = params.lag
    if T < 1 or lag >= T:
        raise ValueError(f"need 1 <= lag < T, got lag={lag}, T={T}")
    hist = np.asarray(init, dtype=float)
    if hist.ndim == 0:
        hist = np.full(lag + 1, float(hist))
    elif hist.shape[0] < lag + 1:
        raise ValueError(f"initial history needs {lag + 1} values, got {hist.shape[0]}")
    else:
        hist = hist[-(lag + 1):]
    if np.any(hist < 0):
        raise ValueError("initial history must be nonnegative")

    if noise:
        sp2, sd2 = params.sigma_p**2, params.sigma_d**2
        draws = as_generator(rng).gamma(
            shape=np.array([1.0 / sp2, 1.0 / sd2]), scale=np.array([sp2, sd2]), size=(T, 2))
    else:
        draws = np.ones((T, 2))

    P, N0, delta = params.P, params.N0, params.delta
    N = np.empty(lag + 1 + T)
    N[: lag + 1] = hist
    e = draws[:, 0].tolist()
    eps = np.exp(-delta * draws[:, 1]).tolist()
    buf = N.tolist()
    for t in range(T):
        cur = lag + t
        old = buf[cur - lag]
        nxt = P * old * math.exp(-old / N0) * e[t] + buf[cur] * eps[t]
        if not (nxt <= cap):
            raise SimulationDivergence(f"population {nxt:.3g} exceeded cap {cap:.3g} at step {t + 1}")
        buf[cur + 1] = nxt
    return np.array(buf[lag + 1:])


@dataclass(frozen=True)
class BlowflySimulator:
    T: int = 180
    init: float = 180.0
    cap: float = 1e12

    def __call__(self, theta, rng) -> np.ndarray:
        return simulate_blowfly(theta, self.T, rng, init=self.init, cap=self.cap)


# -- priors ------------------------------------------------------------------
#
# Every prior exposes sample(rng), and for random-walk MCMC an unconstrained
# parameterization: to_unconstrained / from_unconstrained and the log density
# of the prior expressed in unconstrained coordinates (Jacobian included).

@dataclass(frozen=True)
class DirichletPrior:
    concentration: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        c = np.asarray(self.concentration, dtype=float)
        if np.any(~(c > 0)):
            raise ValueError(f"Dirichlet concentrations must be positive, got {c.tolist()}")
        object.__setattr__(self, "concentration", tuple(float(v) for v in c))

    @property
    def dim(self) -> int:
        return len(self.concentration)

    def sample(self, rng) -> np.ndarray:
        return sample_dirichlet(self.concentration, rng)


@dataclass(frozen=True)
class NormalPrior:
    """Independent normals on unconstrained real parameters."""

    mean: tuple
    std: tuple

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        s = np.atleast_1d(np.asarray(self.std, dtype=float))
        if m.shape != s.shape:
            raise ValueError("mean and std must have the same length")
        if np.any(s < 0):
            raise ValueError("prior stds must be nonnegative")
        object.__setattr__(self, "mean", tuple(m.tolist()))
        object.__setattr__(self, "std", tuple(s.tolist()))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def sample(self, rng) -> np.ndarray:
        return np.asarray(self.mean) + np.asarray(self.std) * as_generator(rng).standard_normal(self.dim)

    def to_unconstrained(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float)

    def from_unconstrained(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float)

    def log_density_unconstrained(self, u) -> float:
        z = (np.asarray(u) - np.asarray(self.mean)) / np.asarray(self.std)
        return float(-0.5 * z @ z - np.sum(np.log(self.std)) - 0.5 * self.dim * np.log(2 * np.pi))


@dataclass(frozen=True)
class LogNormalPrior(NormalPrior):
    """Independent normals on log-parameters; parameters are exp of the draw."""

    names: tuple = field(default=BLOWFLY_NAMES)

    def sample(self, rng) -> np.ndarray:
        return np.exp(super().sample(rng))

    def to_unconstrained(self, theta) -> np.ndarray:
        return np.log(np.asarray(theta, dtype=float))

    def from_unconstrained(self, u) -> np.ndarray:
        return np.exp(np.asarray(u, dtype=float))

    @classmethod
    def from_dict(cls, d: dict) -> LogNormalPrior:
        names = tuple(d["names"])
        return cls(mean=tuple(d["log_mean"]), std=tuple(d["log_std"]), names=names)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "log_mean": list(self.mean), "log_std": list(self.std)}


PriorSpec = LogNormalPrior


def default_blowfly_prior() -> LogNormalPrior:
    """Prior shipped in ``configs/blowfly_prior.json``."""
    text = resources.files("k2abc").joinpath("configs/blowfly_prior.json").read_text()
    return LogNormalPrior.from_dict(json.loads(text))


def sample_blowfly_prior(spec: LogNormalPrior, rng) -> BlowflyParams:
    if spec.dim != 6:
        raise ValueError(f"blowfly prior needs 6 (mean, std) pairs, got {spec.dim}")
    return BlowflyParams.from_vector(spec.sample(rng))
