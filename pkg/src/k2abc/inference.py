"""ABC algorithms producing weighted posterior samples.

K2-ABC weighs prior draws by ``exp(-MMD^2(pseudo, observed) / epsilon)``.
The baselines are rejection and soft ABC on summary statistics, synthetic
likelihood MCMC, kernel ABC and semi-automatic ABC.

Most samplers are built from three reusable stages so that a grid of
epsilon values can reuse one set of simulations:

    table = reference_table(prior, simulator, M, rng)
    disc = mmd_discrepancies(observed, table, kernel, estimator)
    post = weighted_from_discrepancies(table.params, disc, epsilon)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .kernels import GaussianKernel, as_dataset, median_heuristic, sample_rff
from .mmd import MmdEstimator
from .models import SimulationDivergence
from .streams import as_generator, spawn

log = logging.getLogger(__name__)

DEFAULT_RFF_FEATURES = 50


class InferenceError(RuntimeError):
    """An ABC run could not produce a usable posterior."""


@dataclass
class WeightedPosterior:
    """Parameter samples with weights.

    ``weight_kind`` is ``"normalized"`` (nonnegative, summing to 1) or
    ``"signed"`` (kernel-ABC regression weights, used as-is).
    """

    params: np.ndarray
    weights: np.ndarray
    weight_kind: str = "normalized"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.params.ndim == 1:
            self.params = self.params[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        if self.params.shape[0] != self.weights.shape[0]:
            raise ValueError(f"{self.params.shape[0]} parameter vectors but {self.weights.shape[0]} weights")
        if self.weight_kind == "normalized":
            if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
                raise ValueError("normalized weights must be nonnegative and sum to 1")
        elif self.weight_kind != "signed":
            raise ValueError(f"unknown weight kind {self.weight_kind!r}")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def mean(self) -> np.ndarray:
        return posterior_mean(self)


def posterior_mean(p: WeightedPosterior) -> np.ndarray:
    return p.weights @ p.params


def effective_sample_size(p: WeightedPosterior) -> float:
    if p.weight_kind != "normalized":
        raise ValueError("effective sample size is undefined for signed weights")
    return float(1.0 / np.sum(p.weights**2))


def normalize_log_weights(logw) -> np.ndarray:
    """Softmax of log weights with max subtraction."""
    logw = np.asarray(logw, dtype=float)
    top = np.max(logw)
    if not np.isfinite(top):
        raise InferenceError("every sample has zero weight (all simulations diverged); increase epsilon or check the prior")
    w = np.exp(logw - top)
    return w / w.sum()


# -- reference table ------------------------------------------------------------

@dataclass
class ReferenceTable:
    """Prior draws with their pseudo datasets; ``None`` marks a diverged simulation."""

    params: np.ndarray
    datasets: list

    @property
    def diverged(self) -> np.ndarray:
        return np.array([y is None for y in self.datasets])

    def __len__(self) -> int:
        return len(self.datasets)


def draw_prior(prior, rng) -> np.ndarray:
    theta = prior.sample(rng) if hasattr(prior, "sample") else prior(rng)
    return np.atleast_1d(np.asarray(theta, dtype=float))


def reference_table(prior, simulator, M: int, rng) -> ReferenceTable:
    """M prior draws and one pseudo dataset each, on per-index child streams."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    params, data = [], []
    for g in spawn(rng, M):
        theta = draw_prior(prior, g)
        try:
            y = np.asarray(simulator(theta, g), dtype=float)
        except SimulationDivergence as exc:
            log.debug("divergent simulation at %s: %s", theta, exc)
            y = None
        params.append(theta)
        data.append(y)
    return ReferenceTable(np.array(params), data)


def mmd_discrepancies(observed, table: ReferenceTable, kernel, estimator: MmdEstimator) -> np.ndarray:
    obs = as_dataset(observed)
    return np.array([np.inf if y is None else estimator(y, obs, kernel) for y in table.datasets])


def summary_discrepancies(observed, table: ReferenceTable, summary) -> np.ndarray:
    """Euclidean distances between summary vectors of each pseudo dataset and the observations."""
    s_obs = np.asarray(summary(observed), dtype=float)
    out = np.empty(len(table))
    for i, y in enumerate(table.datasets):
        out[i] = np.inf if y is None else np.linalg.norm(np.asarray(summary(y)) - s_obs)
    return out


def weighted_from_discrepancies(params, disc, epsilon: float, q: float = 1.0,
                                diagnostics: dict | None = None) -> WeightedPosterior:
    """Weights proportional to ``exp(-disc**q / epsilon)``, computed in log space."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    disc = np.asarray(disc, dtype=float)
    logw = -np.power(disc, q) / epsilon if q != 1.0 else -disc / epsilon
    w = normalize_log_weights(logw)
    post = WeightedPosterior(params, w, "normalized", dict(diagnostics or {}))
    post.diagnostics.update(
        epsilon=float(epsilon),
        n_diverged=int(np.count_nonzero(np.isinf(disc))),
        ess=effective_sample_size(post),
    )
    return post


def rejection_from_discrepancies(params, disc, epsilon: float,
                                 diagnostics: dict | None = None) -> WeightedPosterior:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    disc = np.asarray(disc, dtype=float)
    accepted = np.flatnonzero(disc < epsilon)
    if accepted.size == 0:
        raise InferenceError(f"no sample accepted at epsilon={epsilon:g}; increase epsilon")
    params = np.asarray(params)[accepted]
    post = WeightedPosterior(params, np.full(accepted.size, 1.0 / accepted.size), "normalized",
                             dict(diagnostics or {}))
    post.diagnostics.update(epsilon=float(epsilon), accepted=int(accepted.size),
                            acceptance_rate=accepted.size / disc.size,
                            accepted_index=accepted.tolist(),
                            n_diverged=int(np.count_nonzero(np.isinf(disc))))
    return post


# -- K2-ABC ---------------------------------------------------------------------

def resolve_estimator(estimator, kernel, d: int, rng, num_features: int = DEFAULT_RFF_FEATURES) -> MmdEstimator:
    """Accept an estimator object or variant name; draws a feature map if needed."""
    if isinstance(estimator, MmdEstimator):
        return estimator
    if estimator == "random_features":
        return MmdEstimator("random_features", sample_rff(kernel, d, num_features, rng))
    return MmdEstimator(estimator)


def k2_abc(observed, prior, simulator, kernel=None, estimator="quadratic_unbiased",
           epsilon: float = 0.1, M: int = 1000, rng=None,
           num_features: int = DEFAULT_RFF_FEATURES) -> WeightedPosterior:
    """K2-ABC with a chosen MMD^2 estimator.

    Args:
        observed: observed dataset, (n,) or (n, d).
        prior: object with ``sample(rng)`` or a callable ``rng -> theta``.
        simulator: callable ``(theta, rng) -> pseudo dataset``.
        kernel: kernel on observations; median-heuristic Gaussian when None.
        estimator: MmdEstimator, or one of ``quadratic_unbiased``,
            ``linear_cyclic``, ``random_features``.
        epsilon: width of the exponentiated-MMD similarity.
        M: number of prior draws.
        rng: seed or Generator.
    """
    rng = as_generator(rng)
    obs = as_dataset(observed)
    if kernel is None:
        kernel = GaussianKernel(median_heuristic(obs))
    est = resolve_estimator(estimator, kernel, obs.shape[1], rng, num_features)
    table = reference_table(prior, simulator, M, rng)
    disc = mmd_discrepancies(obs, table, kernel, est)
    return weighted_from_discrepancies(
        table.params, disc, epsilon,
        diagnostics={"method": "k2", "estimator": est.variant, "gamma": kernel.gamma})


# -- summary-statistic ABC ---------------------------------------------------

def rejection_abc(observed, prior, simulator, summary, epsilon: float, M: int, rng=None) -> WeightedPosterior:
    table = reference_table(prior, simulator, M, rng)
    disc = summary_discrepancies(observed, table, summary)
    return rejection_from_discrepancies(table.params, disc, epsilon, {"method": "rejection"})


def soft_abc(observed, prior, simulator, summary, epsilon: float, q: float = 2.0,
             M: int = 1000, rng=None) -> WeightedPosterior:
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    table = reference_table(prior, simulator, M, rng)
    disc = summary_discrepancies(observed, table, summary)
    return weighted_from_discrepancies(table.params, disc, epsilon, q, {"method": "soft", "q": q})


# -- synthetic likelihood ----------------------------------------------------

def gaussian_log_density(x, mean, cov) -> float:
    """log N(x; mean, cov) via Cholesky, with escalating diagonal jitter on failure."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    scale = max(1.0, float(np.mean(np.abs(np.diag(cov)))))
    for jitter in (0.0, 1e-9, 1e-6 * scale, 1e-3 * scale):
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        return -np.inf
    z = scipy.linalg.solve_triangular(chol, x - mean, lower=True)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(chol))) - 0.5 * x.size * np.log(2 * np.pi))


def synthetic_likelihood(s_star, theta, simulator, summary, inner_M: int, epsilon: float, rng) -> float:
    """Gaussian synthetic log-likelihood ``log N(s*; mu, Sigma + eps^2 I)``.

    ``mu`` and ``Sigma`` (divisor inner_M - 1) come from inner_M simulations
    at theta. Diverged simulations are dropped; -inf if too few remain.
    """
    s_star = np.atleast_1d(np.asarray(s_star, dtype=float))
    dim = s_star.size
    if inner_M < dim + 2:
        raise ValueError(f"inner_M must be >= {dim + 2} for {dim} statistics, got {inner_M}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    rng = as_generator(rng)
    stats = []
    for _ in range(inner_M):
        try:
            stats.append(summary(simulator(theta, rng)))
        except SimulationDivergence:
            continue
    if len(stats) < dim + 2:
        return -np.inf
    stats = np.asarray(stats, dtype=float).reshape(len(stats), dim)
    mu = stats.mean(axis=0)
    cov = np.atleast_2d(np.cov(stats, rowvar=False, ddof=1))
    return gaussian_log_density(s_star, mu, cov + epsilon**2 * np.eye(dim))


def mh_log_ratio(log_target_current: float, log_target_proposed: float,
                 log_q_forward: float = 0.0, log_q_backward: float = 0.0) -> float:
    """log of pi(t') p(s*|t') q(t|t') / (pi(t) p(s*|t) q(t'|t)).

    ``log_q_forward`` is log q(t'|t) and ``log_q_backward`` log q(t|t').
    """
    if np.isneginf(log_target_proposed):
        return -np.inf
    if np.isneginf(log_target_current):
        return np.inf
    return (log_target_proposed + log_q_backward) - (log_target_current + log_q_forward)


def sl_abc_mcmc(observed, prior, simulator, summary, epsilon: float = 0.0, inner_M: int = 50,
                chain_length: int = 10000, burn_in: int = 1000, proposal_scale=0.1, rng=None,
                theta0=None, target_acceptance: float | None = None) -> WeightedPosterior:
    """Random-walk Metropolis-Hastings on the synthetic likelihood.

    Proposals are Gaussian in the prior's unconstrained coordinates (log
    scale for the blowfly prior), so the proposal ratio cancels. The
    likelihood is re-estimated at each proposal and kept for the current
    state. With ``target_acceptance`` the proposal scale is adapted during
    burn-in only. Returns the post-burn-in states with uniform weights.
    """
    if not (chain_length > burn_in >= 0):
        raise ValueError(f"need chain_length > burn_in >= 0, got {chain_length}, {burn_in}")
    for attr in ("to_unconstrained", "from_unconstrained", "log_density_unconstrained"):
        if not hasattr(prior, attr):
            raise TypeError(f"SL-ABC needs a prior with an unconstrained parameterization (missing {attr})")
    rng = as_generator(rng)
    s_star = np.atleast_1d(summary(observed))

    if theta0 is None:
        u = np.asarray(prior.mean, dtype=float)
    else:
        u = prior.to_unconstrained(theta0)
    scale = np.broadcast_to(np.asarray(proposal_scale, dtype=float), u.shape).copy()
    log_scale_adj = 0.0

    def log_target(u_):
        lp = prior.log_density_unconstrained(u_)
        if not np.isfinite(lp):
            return -np.inf
        return lp + synthetic_likelihood(s_star, prior.from_unconstrained(u_), simulator,
                                         summary, inner_M, epsilon, rng)

    cur = log_target(u)
    chain = np.empty((chain_length, u.size))
    accepted_total = accepted_post = 0
    for it in range(chain_length):
        step = np.exp(log_scale_adj) * scale * rng.standard_normal(u.size)
        u_new = u + step
        prop = log_target(u_new)
        log_alpha = min(0.0, mh_log_ratio(cur, prop))
        if np.log(rng.random()) < log_alpha:
            u, cur = u_new, prop
            accepted_total += 1
            if it >= burn_in:
                accepted_post += 1
            acc = 1.0
        else:
            acc = 0.0
        if target_acceptance is not None and it < burn_in:
            log_scale_adj += (acc - target_acceptance) / (it + 1) ** 0.6
        chain[it] = prior.from_unconstrained(u)

    kept = chain[burn_in:]
    n_kept = kept.shape[0]
    return WeightedPosterior(kept, np.full(n_kept, 1.0 / n_kept), "normalized", {
        "method": "sl",
        "epsilon": float(epsilon),
        "inner_M": int(inner_M),
        "chain_length": int(chain_length),
        "burn_in": int(burn_in),
        "acceptance_rate": accepted_post / n_kept,
        "acceptance_rate_overall": accepted_total / chain_length,
        "proposal_scale": (np.exp(log_scale_adj) * scale).tolist(),
    })


# -- kernel ABC ----------------------------------------------------------------

def k_abc(train_stats, train_params, s_star, kernel=None, lam: float = 1e-3) -> WeightedPosterior:
    """Kernel ABC weights ``w = (G + M lam I)^{-1} g(S, s*)``.

    The weights are signed and generally do not sum to one. The kernel on
    summary vectors defaults to a median-heuristic Gaussian.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    S = as_dataset(train_stats)
    params = np.asarray(train_params, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    M = S.shape[0]
    if M < 1 or params.shape[0] != M:
        raise ValueError(f"need matching nonempty training sets, got {M} stats and {params.shape[0]} params")
    s_star = np.atleast_2d(np.asarray(s_star, dtype=float).ravel())
    if kernel is None:
        kernel = GaussianKernel(median_heuristic(S)) if M >= 2 else GaussianKernel(1.0)
    G = kernel.gram(S, S)
    rhs = kernel.gram(S, s_star)[:, 0]
    A = G + M * lam * np.eye(M)
    try:
        w = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A, lower=True), rhs)
    except np.linalg.LinAlgError as exc:
        raise InferenceError(f"kernel ABC system is not positive definite; increase lambda ({exc})") from exc
    if not np.all(np.isfinite(w)):
        raise InferenceError("kernel ABC solve produced non-finite weights; increase lambda")
    residual = float(np.linalg.norm(A @ w - rhs))
    return WeightedPosterior(params, w, "signed", {
        "method": "kabc", "lambda": float(lam), "gamma": kernel.gamma,
        "residual": residual, "weight_sum": float(w.sum()),
    })


def kabc_from_table(observed, table: ReferenceTable, summary, lam: float, kernel=None) -> WeightedPosterior:
    ok = ~table.diverged
    if not np.any(ok):
        raise InferenceError("all kernel-ABC training simulations diverged")
    S = np.array([summary(y) for y, keep in zip(table.datasets, ok) if keep])
    return k_abc(S, table.params[ok], summary(observed), kernel, lam)


def kernel_abc(observed, prior, simulator, summary, lam: float, M: int, rng=None, kernel=None) -> WeightedPosterior:
    return kabc_from_table(observed, reference_table(prior, simulator, M, rng), summary, lam, kernel)


# -- semi-automatic ABC --------------------------------------------------------

@dataclass
class SaRegression:
    """Linear map from candidate statistics to an estimate of E[theta | y]."""

    coefficients: np.ndarray
    intercept: np.ndarray
    ridge: float = 0.0

    @property
    def dim(self) -> int:
        return self.intercept.shape[0]

    def __call__(self, g) -> np.ndarray:
        return self.coefficients @ np.asarray(g, dtype=float) + self.intercept


def sa_fit(candidates, params, ridge: float = 1e-6) -> SaRegression:
    """Least-squares fit ``theta ~ B g + c`` on pilot simulations.

    Columns are standardized before fitting. A rank-deficient design falls
    back to ridge regression with penalty ``ridge`` (recorded on the result).
    """
    X = np.asarray(candidates, dtype=float)
    Y = np.asarray(params, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    M, r = X.shape
    if Y.shape[0] != M:
        raise ValueError(f"{M} candidate vectors but {Y.shape[0]} parameter vectors")
    if M <= r + 1:
        raise ValueError(f"semi-automatic ABC needs more pilot samples than regressors + 1 (M={M}, r={r})")
    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0)
    x_std[x_std == 0] = 1.0
    Z = (X - x_mean) / x_std
    y_mean = Y.mean(axis=0)
    Yc = Y - y_mean
    used = 0.0
    if np.linalg.matrix_rank(Z) < r:
        used = ridge
        beta = np.linalg.solve(Z.T @ Z + ridge * M * np.eye(r), Z.T @ Yc)
        log.info("semi-automatic ABC design is rank deficient; using ridge %g", ridge)
    else:
        beta = np.linalg.lstsq(Z, Yc, rcond=None)[0]
    B = (beta / x_std[:, None]).T
    c = y_mean - B @ x_mean
    return SaRegression(B, c, used)


def sa_summary(regression: SaRegression, candidate):
    """Learned summary ``y -> B g(y) + c``."""
    def summary(y):
        return regression(candidate(y))
    return summary


def sa_abc(observed, prior, simulator, candidate, pilot_M: int, epsilon: float, M: int,
           rng=None, q: float = 2.0) -> WeightedPosterior:
    """Semi-automatic ABC: regression-learned summary, then soft ABC.

    ``candidate`` maps a dataset to the candidate statistic vector g(y),
    e.g. ``raw_quadratic_stats`` or blowfly statistics with their squares.
    """
    rng = as_generator(rng)
    pilot_rng, main_rng = spawn(rng, 2)
    reg, n_pilot = fit_sa_pilot(prior, simulator, candidate, pilot_M, pilot_rng)
    summary = sa_summary(reg, candidate)
    table = reference_table(prior, simulator, M, main_rng)
    disc = summary_discrepancies(observed, table, summary)
    return weighted_from_discrepancies(table.params, disc, epsilon, q, {
        "method": "sa", "q": q, "pilot_M": pilot_M, "pilot_used": n_pilot, "ridge": reg.ridge})


def fit_sa_pilot(prior, simulator, candidate, pilot_M: int, rng):
    pilot = reference_table(prior, simulator, pilot_M, rng)
    ok = ~pilot.diverged
    G = np.array([candidate(y) for y, keep in zip(pilot.datasets, ok) if keep])
    if G.shape[0] == 0:
        raise InferenceError("all pilot simulations diverged")
    return sa_fit(G, pilot.params[ok]), int(ok.sum())
