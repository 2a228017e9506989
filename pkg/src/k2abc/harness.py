"""Experiment configuration, hyperparameter tuning and end-to-end runs.

A run is fully determined by its JSON config and master seed. Random
streams are derived with :func:`k2abc.streams.substream` from
``(seed, tag, index)`` with these tags:

    "truth"        true parameters when none are configured
    "observed"     synthetic observations
    "table-train"  reference table for tuning (training prefix)
    "table-full"   reference table for the final run
    "rff"          random Fourier feature map
    "predict"      held-out predictions during tuning
    "eval"         summary-error evaluation draws
    "pilot-<phase>" semi-automatic ABC pilot table
    "mcmc-<phase>"  synthetic-likelihood chain
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .inference import (
    InferenceError,
    WeightedPosterior,
    effective_sample_size,
    fit_sa_pilot,
    kabc_from_table,
    mmd_discrepancies,
    reference_table,
    rejection_from_discrepancies,
    sa_summary,
    sl_abc_mcmc,
    summary_discrepancies,
    weighted_from_discrepancies,
)
from .kernels import GaussianKernel, as_dataset, median_heuristic, sample_rff
from .mmd import MmdEstimator
from .models import (
    BLOWFLY_NAMES,
    THETA_STAR,
    BlowflyParams,
    DirichletPrior,
    LogNormalPrior,
    SimulationDivergence,
    default_blowfly_prior,
    simulate_blowfly,
    simulate_mixture,
)
from .streams import substream
from .summaries import SummarySpec, histogram_distance, raw_quadratic_stats, with_squares

log = logging.getLogger(__name__)

ALGORITHMS = ("k2", "k2-lin", "k2-rf", "rej", "soft", "sl", "kabc", "sa")
K2_VARIANTS = {"k2": "quadratic_unbiased", "k2-lin": "linear_cyclic", "k2-rf": "random_features"}
MODELS = ("mixture", "blowfly")
SA_CANDIDATES = ("raw_quadratic", "blowfly10_squared", "mean_var_squared")
DEFAULT_SL = {"inner_M": 50, "chain_length": 10000, "burn_in": 5000,
              "proposal_scale": 0.1, "target_acceptance": 0.2}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentConfig:
    model: str = "mixture"
    algorithm: str = "k2"
    seed: int = 0
    M: int = 1000
    n: int | None = None
    epsilon_grid: list = field(default_factory=lambda: [0.01])
    bandwidth: str | float = "median"
    bandwidth_scales: list = field(default_factory=lambda: [1.0])
    num_features: int = 50
    q: float = 2.0
    summary: dict | None = None
    prior: dict | None = None
    true_params: list | None = None
    data: str | None = None
    init: str | float = 180.0
    divergence_cap: float = 1e12
    sl: dict = field(default_factory=dict)
    sa: dict = field(default_factory=dict)
    tune_mode: str = "heldout"
    train_fraction: float = 0.75
    bins: int = 10
    eval_repeats: int = 100
    eval_algorithms: list | None = None
    figures: bool = True
    out: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known - {"comment"})
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        cfg = cls(**{k: v for k, v in d.items() if k in known})
        cfg.resolve()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            d = io.read_json(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def resolve(self) -> None:
        """Validate and fill model-dependent defaults in place."""
        if self.model not in MODELS:
            raise ConfigError(f"model: expected one of {MODELS}, got {self.model!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: expected one of {ALGORITHMS}, got {self.algorithm!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed: must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.M, int) or self.M < 1:
            raise ConfigError(f"M: must be a positive integer, got {self.M!r}")
        if self.n is None:
            self.n = 400 if self.model == "mixture" else 180
        if not isinstance(self.n, int) or self.n < 2:
            raise ConfigError(f"n: must be an integer >= 2, got {self.n!r}")
        grid = self.epsilon_grid
        if (not isinstance(grid, list) or not grid
                or any(not isinstance(e, (int, float)) or not e > 0 or not math.isfinite(e) for e in grid)
                or any(b <= a for a, b in zip(grid, grid[1:]))):
            raise ConfigError(f"epsilon_grid: must be a nonempty, strictly ascending list of positive numbers, got {grid!r}")
        self.epsilon_grid = [float(e) for e in grid]
        if self.bandwidth != "median":
            if not isinstance(self.bandwidth, (int, float)) or not self.bandwidth > 0:
                raise ConfigError(f"bandwidth: must be 'median' or a positive number, got {self.bandwidth!r}")
            self.bandwidth = float(self.bandwidth)
        if not self.bandwidth_scales or any(not s > 0 for s in self.bandwidth_scales):
            raise ConfigError("bandwidth_scales: must be a nonempty list of positive numbers")
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction: must lie in (0, 1), got {self.train_fraction}")
        if self.tune_mode not in ("heldout", "oracle"):
            raise ConfigError(f"tune_mode: expected 'heldout' or 'oracle', got {self.tune_mode!r}")
        if self.bins < 1 or self.eval_repeats < 1 or self.num_features < 1:
            raise ConfigError("bins, eval_repeats and num_features must be positive")
        if self.summary is None:
            self.summary = {"variant": "mean_var" if self.model == "mixture" else "blowfly10"}
        try:
            self.summary = SummarySpec(**self.summary).to_dict()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"summary: {exc}") from exc
        if self.prior is None:
            self.prior = ({"concentration": [1.0] * 5} if self.model == "mixture"
                          else default_blowfly_prior().to_dict())
        try:
            build_prior(self.model, self.prior)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"prior: {exc}") from exc
        if self.model == "mixture" and self.true_params is None and self.data is None:
            self.true_params = list(THETA_STAR)
        if self.init != "observed" and not (isinstance(self.init, (int, float)) and self.init >= 0):
            raise ConfigError(f"init: must be 'observed' or a nonnegative number, got {self.init!r}")
        unknown = set(self.sl) - set(DEFAULT_SL)
        if unknown:
            raise ConfigError(f"sl: unknown field(s) {sorted(unknown)}")
        self.sl = {**DEFAULT_SL, **self.sl}
        sa = {"pilot_M": self.M,
              "candidates": "mean_var_squared" if self.model == "mixture" else "blowfly10_squared",
              **self.sa}
        if sa["candidates"] not in SA_CANDIDATES:
            raise ConfigError(f"sa.candidates: expected one of {SA_CANDIDATES}, got {sa['candidates']!r}")
        self.sa = sa
        if self.eval_algorithms is not None and any(a not in ALGORITHMS for a in self.eval_algorithms):
            raise ConfigError(f"eval_algorithms: entries must be among {ALGORITHMS}")

    def to_dict(self) -> dict:
        return asdict(self)


# -- models ------------------------------------------------------------------

def build_prior(model: str, spec: dict):
    if model == "mixture":
        return DirichletPrior(tuple(spec["concentration"]))
    prior = LogNormalPrior.from_dict({"names": spec.get("names", BLOWFLY_NAMES), **spec})
    if prior.dim != 6:
        raise ValueError(f"blowfly prior needs 6 entries, got {prior.dim}")
    return prior


@dataclass
class Model:
    """Prior plus a simulator that can also continue from a given history."""

    name: str
    prior: object
    param_names: tuple
    init: str | float = 180.0
    cap: float = 1e12

    def simulate(self, theta, length: int, rng, history=None) -> np.ndarray:
        if self.name == "mixture":
            return simulate_mixture(theta, length, rng)
        init = self.init if history is None else history
        return simulate_blowfly(theta, length, rng, init=init, cap=self.cap)

    def simulator(self, length: int, observed=None):
        if self.name == "blowfly" and self.init == "observed":
            hist = np.asarray(observed, dtype=float)
            return lambda theta, rng: self.simulate(theta, length, rng, history=hist[: BlowflyParams.from_vector(theta).lag + 1])
        return lambda theta, rng: self.simulate(theta, length, rng)

    def project(self, theta) -> np.ndarray:
        """Map an estimate onto valid parameters (needed for signed-weight means)."""
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise ValueError("non-finite parameter estimate")
        if self.name == "mixture":
            t = np.clip(theta, 0, None)
            if t.sum() <= 0:
                raise ValueError("estimate has no positive mixture weight")
            return t / t.sum()
        BlowflyParams.from_vector(theta)
        return theta


def build_model(cfg: ExperimentConfig) -> Model:
    names = tuple(f"theta{i + 1}" for i in range(5)) if cfg.model == "mixture" else BLOWFLY_NAMES
    return Model(cfg.model, build_prior(cfg.model, cfg.prior), names, cfg.init, cfg.divergence_cap)


def observed_data(cfg: ExperimentConfig, model: Model):
    """Observed series and the true parameters (None for user data)."""
    if cfg.data is not None:
        return io.load_dataset(cfg.data), None
    if cfg.true_params is not None:
        theta = np.asarray(cfg.true_params, dtype=float)
    else:
        theta = model.prior.sample(substream(cfg.seed, "truth"))
    y = model.simulate(theta, cfg.n, substream(cfg.seed, "observed"))
    return y, theta


# -- algorithm plumbing -----------------------------------------------------------

def candidate_stats(name: str, spec: SummarySpec):
    if name == "raw_quadratic":
        return raw_quadratic_stats
    base = SummarySpec("mean_var") if name == "mean_var_squared" else spec
    return lambda y: with_squares(base(y))


class Fitter:
    """Runs one algorithm on one observed dataset for many hyperparameters.

    Simulations and discrepancies are cached so a grid over epsilon and
    bandwidth scale costs one reference table.
    """

    def __init__(self, cfg: ExperimentConfig, model: Model, observed, phase: str):
        self.cfg = cfg
        self.model = model
        self.observed = np.asarray(observed, dtype=float)
        self.phase = phase
        self.simulator = model.simulator(len(self.observed), self.observed)
        self.summary = SummarySpec(**cfg.summary).resolved(self.observed)
        self._table = None
        self._disc = {}
        self._sa = None
        self._kabc_stats = None
        self.base_gamma = None
        if cfg.algorithm in K2_VARIANTS:
            self.base_gamma = (median_heuristic(as_dataset(self.observed)) if cfg.bandwidth == "median"
                               else float(cfg.bandwidth))

    @property
    def table(self):
        if self._table is None:
            self._table = reference_table(self.model.prior, self.simulator, self.cfg.M,
                                          substream(self.cfg.seed, f"table-{self.phase}"))
        return self._table

    def kernel(self, scale: float) -> GaussianKernel:
        return GaussianKernel(self.base_gamma * scale)

    def fit(self, epsilon: float, scale: float = 1.0) -> WeightedPosterior:
        algo = self.cfg.algorithm
        if algo in K2_VARIANTS:
            if scale not in self._disc:
                ker = self.kernel(scale)
                if algo == "k2-rf":
                    est = MmdEstimator("random_features", sample_rff(
                        ker, as_dataset(self.observed).shape[1], self.cfg.num_features, substream(self.cfg.seed, "rff")))
                else:
                    est = MmdEstimator(K2_VARIANTS[algo])
                self._disc[scale] = mmd_discrepancies(self.observed, self.table, ker, est)
            return weighted_from_discrepancies(self.table.params, self._disc[scale], epsilon, 1.0, {
                "method": algo, "gamma": self.base_gamma * scale, "bandwidth_scale": scale})
        if algo in ("rej", "soft"):
            if "summary" not in self._disc:
                self._disc["summary"] = summary_discrepancies(self.observed, self.table, self.summary)
            if algo == "rej":
                post = rejection_from_discrepancies(self.table.params, self._disc["summary"], epsilon, {"method": algo})
                post.diagnostics.pop("accepted_index")
                return post
            return weighted_from_discrepancies(self.table.params, self._disc["summary"], epsilon, self.cfg.q,
                                               {"method": algo, "q": self.cfg.q})
        if algo == "sa":
            if self._sa is None:
                cand = candidate_stats(self.cfg.sa["candidates"], self.summary)
                reg, used = fit_sa_pilot(self.model.prior, self.simulator, cand, self.cfg.sa["pilot_M"],
                                         substream(self.cfg.seed, f"pilot-{self.phase}"))
                self._sa = (reg, used)
                self._disc["sa"] = summary_discrepancies(self.observed, self.table, sa_summary(reg, cand))
            reg, used = self._sa
            return weighted_from_discrepancies(self.table.params, self._disc["sa"], epsilon, self.cfg.q, {
                "method": "sa", "q": self.cfg.q, "pilot_used": used, "ridge": reg.ridge,
                "candidates": self.cfg.sa["candidates"]})
        if algo == "kabc":
            return kabc_from_table(self.observed, self.table, self.summary, lam=epsilon)
        sl = self.cfg.sl
        return sl_abc_mcmc(self.observed, self.model.prior, self.simulator, self.summary, epsilon,
                           sl["inner_M"], sl["chain_length"], sl["burn_in"], sl["proposal_scale"],
                           substream(self.cfg.seed, f"mcmc-{self.phase}"),
                           target_acceptance=sl["target_acceptance"])


def split_point(T: int, train_fraction: float) -> int:
    return int(math.ceil(train_fraction * T))


def predict(model: Model, theta, train, length: int, rng) -> np.ndarray:
    """Simulate ``length`` future points at theta, continuing from the training tail."""
    theta = model.project(theta)
    if model.name == "blowfly":
        lag = BlowflyParams.from_vector(theta).lag
        if lag + 1 <= len(train) and lag < length:
            return model.simulate(theta, length, rng, history=np.asarray(train)[-(lag + 1):])
    return model.simulate(theta, length, rng)


def tune_hyperparams(cfg: ExperimentConfig, observed, rng_seed: int | None = None,
                     model: Model | None = None, true_params=None):
    """Grid search over (epsilon, bandwidth scale) on a contiguous training prefix.

    ``heldout`` mode scores each grid point by the histogram distance between
    the held-out suffix and a prediction simulated at the posterior mean;
    ``oracle`` mode scores by the Euclidean error of the posterior mean
    against ``true_params``. Ties go to the smallest epsilon.

    Returns:
        (chosen epsilon, chosen kernel params dict, list of score rows)
    """
    model = model or build_model(cfg)
    observed = np.asarray(observed, dtype=float)
    T = len(observed)
    if T < 8:
        raise ValueError(f"tuning needs at least 8 observations, got {T}")
    seed = cfg.seed if rng_seed is None else rng_seed
    if cfg.tune_mode == "oracle":
        if true_params is None:
            raise ConfigError("tune_mode: 'oracle' requires known true parameters")
        train = observed
    else:
        cut = split_point(T, cfg.train_fraction)
        train, test = observed[:cut], observed[cut:]
        if len(train) != cut or len(train) + len(test) != T:
            raise RuntimeError(f"training slice has length {len(train)}, expected {cut}")
    # oracle mode fits the full data, so it shares the final run's reference table
    phase = "full" if cfg.tune_mode == "oracle" else "train"
    fitter = Fitter(cfg if seed == cfg.seed else _with_seed(cfg, seed), model, train, phase)
    scales = cfg.bandwidth_scales if cfg.algorithm in K2_VARIANTS else [1.0]
    rows = []
    best = None
    for eps in cfg.epsilon_grid:
        for scale in scales:
            row = {"epsilon": eps, "bandwidth_scale": scale}
            if fitter.base_gamma is not None:
                row["gamma"] = fitter.base_gamma * scale
            try:
                post = fitter.fit(eps, scale)
                mean = post.mean()
                if cfg.tune_mode == "oracle":
                    score = float(np.linalg.norm(mean - np.asarray(true_params)))
                else:
                    pred = predict(model, mean, train, len(test), substream(seed, "predict"))
                    score = histogram_distance(test, pred, cfg.bins)
            except (InferenceError, SimulationDivergence, ValueError) as exc:
                row["error"] = str(exc)
                score = math.inf
            row["score"] = score
            rows.append(row)
            if score < math.inf and (best is None or score < best["score"]):
                best = row
    if best is None:
        raise InferenceError("every grid point failed (divergent simulations or empty posteriors)")
    kernel = {}
    if fitter.base_gamma is not None:
        kernel = {"gamma": best["gamma"], "bandwidth_scale": best["bandwidth_scale"]}
    return best["epsilon"], kernel, rows


def _with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    d = cfg.to_dict()
    d["seed"] = seed
    return ExperimentConfig.from_dict(d)


def evaluate_summary_error(observed, theta_hat, simulator, summary=None, repeats: int = 100, rng=None) -> list:
    """Distances ``|s(y) - s(y*)|`` for ``repeats`` simulations at theta_hat.

    Divergent simulations give ``inf`` entries.
    """
    summary = summary or SummarySpec("blowfly10").resolved(observed)
    s_obs = np.asarray(summary(observed))
    rng = rng if rng is not None else np.random.default_rng(0)
    out = []
    for _ in range(repeats):
        try:
            out.append(float(np.linalg.norm(np.asarray(summary(simulator(theta_hat, rng))) - s_obs)))
        except SimulationDivergence:
            out.append(math.inf)
    return out


# -- end to end ----------------------------------------------------------------

@dataclass
class RunReport:
    posterior_mean: list
    scores: list
    chosen_epsilon: float
    kernel: dict
    diagnostics: dict
    wall_clock_seconds: float
    tune_mode: str
    config: dict
    true_params: list | None = None
    posterior_error: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def fit_final(cfg: ExperimentConfig, model: Model, observed, true_params=None):
    """Tune when the grid has more than one point, then fit on all data."""
    n_points = len(cfg.epsilon_grid) * (len(cfg.bandwidth_scales) if cfg.algorithm in K2_VARIANTS else 1)
    if n_points > 1:
        eps, kernel, rows = tune_hyperparams(cfg, observed, model=model, true_params=true_params)
        scale = kernel.get("bandwidth_scale", 1.0)
    else:
        eps, scale, rows = cfg.epsilon_grid[0], cfg.bandwidth_scales[0], []
    fitter = Fitter(cfg, model, observed, "full")
    post = fitter.fit(eps, scale)
    kernel = {} if fitter.base_gamma is None else {"gamma": fitter.base_gamma * scale, "bandwidth_scale": scale}
    return post, eps, kernel, rows


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, figures: bool | None = None) -> RunReport:
    """Tune, fit on the full data and write posterior.csv, diagnostics.json and report.json."""
    start = time.perf_counter()
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    observed, theta_true = observed_data(cfg, model)
    post, eps, kernel, rows = fit_final(cfg, model, observed, theta_true)
    mean = post.mean()

    diag = dict(post.diagnostics)
    diag.update(seed=cfg.seed, epsilon=eps, M=cfg.M, weight_kind=post.weight_kind, n_observed=len(observed))
    if post.weight_kind == "normalized":
        diag["ess"] = effective_sample_size(post)
    if cfg.model == "blowfly":
        diag["tau_discretization"] = "lag = max(1, round(tau))"
        diag["init"] = cfg.init
    io.save_posterior(out / "posterior.csv", post, model.param_names)
    io.write_json(out / "diagnostics.json", diag)
    if cfg.data is None:
        io.save_dataset(out / "observed.csv", observed)

    err = None if theta_true is None else float(np.linalg.norm(mean - theta_true))
    report = RunReport(
        posterior_mean=mean.tolist(), scores=rows, chosen_epsilon=eps, kernel=kernel,
        diagnostics=diag, wall_clock_seconds=time.perf_counter() - start,
        tune_mode=cfg.tune_mode if rows else "none", config=cfg.to_dict(),
        true_params=None if theta_true is None else np.asarray(theta_true).tolist(),
        posterior_error=err)
    io.write_json(out / "report.json", report.to_dict())
    if cfg.figures if figures is None else figures:
        from . import plotting
        plotting.render_run(out, report, post, observed, model)
    return report


def run_eval(cfg: ExperimentConfig, algorithms=None, out: str | Path | None = None,
             figures: bool | None = None) -> dict:
    """Per-algorithm summary-statistic errors at the fitted posterior means.

    Writes ``eval_distances.csv`` (algorithm, draw, distance) and
    ``eval_summary.json``.
    """
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    algorithms = algorithms or cfg.eval_algorithms or [cfg.algorithm]
    base = cfg.to_dict()
    model = build_model(cfg)
    observed, theta_true = observed_data(cfg, model)
    summary = SummarySpec(**cfg.summary).resolved(observed)
    if summary.variant == "mean_var" and cfg.model == "blowfly":
        summary = SummarySpec("blowfly10").resolved(observed)
    results = {}
    for algo in algorithms:
        acfg = ExperimentConfig.from_dict({**base, "algorithm": algo})
        post, eps, kernel, _ = fit_final(acfg, model, observed, theta_true)
        try:
            theta_hat = model.project(post.mean())
            dists = evaluate_summary_error(observed, theta_hat, model.simulator(len(observed), observed),
                                           summary, cfg.eval_repeats, substream(cfg.seed, "eval"))
        except ValueError as exc:
            theta_hat, dists = post.mean(), [math.inf] * cfg.eval_repeats
            log.warning("%s: invalid posterior mean (%s)", algo, exc)
        finite = np.array([d for d in dists if math.isfinite(d)])
        results[algo] = {
            "epsilon": eps, "kernel": kernel, "posterior_mean": np.asarray(theta_hat).tolist(),
            "distances": dists, "n_divergent": len(dists) - finite.size,
            "median": float(np.median(dists)),
            "mean": float(finite.mean()) if finite.size else math.inf,
        }
    with (out / "eval_distances.csv").open("w") as fh:
        fh.write("algorithm,draw,distance\n")
        for algo, r in results.items():
            for i, d in enumerate(r["distances"]):
                fh.write(f"{algo},{i},{d!r}\n")
    io.write_json(out / "eval_summary.json", {
        "config": cfg.to_dict(), "summary": summary.to_dict(),
        "results": {a: {k: v for k, v in r.items() if k != "distances"} for a, r in results.items()}})
    if cfg.figures if figures is None else figures:
        from . import plotting
        plotting.render_eval(out, results)
    return results
