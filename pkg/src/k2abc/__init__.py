"""Approximate Bayesian computation with kernel embeddings (K2-ABC)."""

from .inference import (
    InferenceError,
    WeightedPosterior,
    effective_sample_size,
    k2_abc,
    k_abc,
    kernel_abc,
    posterior_mean,
    rejection_abc,
    sa_abc,
    sa_fit,
    sl_abc_mcmc,
    soft_abc,
    synthetic_likelihood,
)
from .kernels import GaussianKernel, RffFeatureMap, median_heuristic, sample_rff
from .mmd import MmdEstimator, kappa_epsilon, mmd2_linear, mmd2_rff, mmd2_unbiased
from .models import (
    THETA_STAR,
    BlowflyParams,
    BlowflySimulator,
    DirichletPrior,
    LogNormalPrior,
    MixtureParams,
    MixtureSimulator,
    NormalPrior,
    SimulationDivergence,
    default_blowfly_prior,
    simulate_blowfly,
    simulate_mixture,
)
from .summaries import SummarySpec, blowfly_stats, histogram_distance, mean_var_stats

__version__ = "0.1.0"
