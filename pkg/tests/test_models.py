import math

import numpy as np
import pytest
from scipy import stats

from k2abc.models import (
    THETA_STAR,
    BlowflyParams,
    BlowflySimulator,
    DirichletPrior,
    LogNormalPrior,
    MixtureParams,
    NormalPrior,
    SimulationDivergence,
    default_blowfly_prior,
    sample_blowfly_prior,
    sample_dirichlet,
    sample_gamma,
    simulate_blowfly,
    simulate_mixture,
)


def test_dirichlet_on_simplex():
    for seed in range(20):
        t = sample_dirichlet([1.0] * 5, seed)
        assert t.shape == (5,) and np.all(t >= 0)
        assert abs(t.sum() - 1.0) <= 1e-12


def test_dirichlet_concentrated():
    t = sample_dirichlet([1e6, 1e6], 0)
    assert np.all(np.abs(t - 0.5) < 0.01)


def test_dirichlet_mean():
    rng = np.random.default_rng(1)
    draws = np.array([sample_dirichlet([1.0] * 5, rng) for _ in range(100_000)])
    assert np.all(np.abs(draws.mean(axis=0) - 0.2) < 0.01)


@pytest.mark.parametrize("conc", [[1.0, 0.0], [-1.0, 2.0], [np.nan, 1.0]])
def test_dirichlet_rejects_nonpositive(conc):
    with pytest.raises(ValueError):
        sample_dirichlet(conc, 0)


def test_gamma_moments():
    rng = np.random.default_rng(2)
    s2 = 0.25
    draws = np.array([sample_gamma(1 / s2, s2, rng) for _ in range(100_000)])
    assert abs(draws.mean() - 1.0) < 0.01
    expo = np.random.default_rng(3).gamma(1.0, 1.0, size=100_000)
    assert abs(np.array([sample_gamma(1.0, 1.0, rng) for _ in range(100_000)]).var(ddof=1) - 1.0) < 0.05
    assert abs(expo.var() - 1.0) < 0.05


def test_gamma_determinism_and_errors():
    assert sample_gamma(2.0, 3.0, 9) == sample_gamma(2.0, 3.0, 9)
    for shape, scale in [(0.0, 1.0), (1.0, -1.0)]:
        with pytest.raises(ValueError):
            sample_gamma(shape, scale, 0)


def test_mixture_params_validation():
    MixtureParams(THETA_STAR)
    with pytest.raises(ValueError):
        MixtureParams((0.5, 0.5, 0.1, 0.0, 0.0))
    with pytest.raises(ValueError):
        MixtureParams((1.0, 0.0, 0.0, 0.0))


@pytest.mark.parametrize("theta, lo, hi, n", [
    ((1, 0, 0, 0, 0), 0.0, 1.0, 100),
    ((0, 0, 0, 0, 1), 4.0, 5.0, 10),
])
def test_mixture_degenerate(theta, lo, hi, n):
    y = simulate_mixture(MixtureParams(theta), n, 0)
    assert y.shape == (n,)
    assert np.all((y >= lo) & (y < hi))


def test_mixture_bin_proportions():
    y = simulate_mixture(MixtureParams(THETA_STAR), 100_000, 4)
    assert np.all((y >= 0) & (y < 5))
    frac = np.mean((y >= 2) & (y < 3))
    assert abs(frac - 0.33) < 0.01
    counts = np.bincount(y.astype(int), minlength=5)
    p = stats.chisquare(counts, 100_000 * np.array(THETA_STAR)).pvalue
    assert p > 1e-6


def test_mixture_seed_dependence():
    a = simulate_mixture(THETA_STAR, 50, 1)
    assert np.array_equal(a, simulate_mixture(THETA_STAR, 50, 1))
    assert not np.array_equal(a, simulate_mixture(THETA_STAR, 50, 2))


def test_blowfly_prior_degenerate_spec():
    spec = LogNormalPrior(mean=(1.0, 2.0, -1.0, -0.5, 2.5, -2.0), std=(0.0,) * 6)
    p = sample_blowfly_prior(spec, 0)
    assert np.array_equal(p.to_vector(), np.exp(np.array(spec.mean)))


def test_blowfly_prior_determinism_and_normality():
    spec = default_blowfly_prior()
    assert sample_blowfly_prior(spec, 5) == sample_blowfly_prior(spec, 5)
    rng = np.random.default_rng(6)
    logP = np.log([sample_blowfly_prior(spec, rng).P for _ in range(10_000)])
    m, s = spec.mean[0], spec.std[0]
    assert abs(logP.mean() - m) < 3 * s / math.sqrt(10_000)


def test_blowfly_params_validation():
    with pytest.raises(ValueError):
        BlowflyParams(1.0, 1.0, 1.0, 1.0, 1.0, 0.0)
    assert BlowflyParams(1, 1, 1, 1, 0.2, 1).lag == 1
    assert BlowflyParams(1, 1, 1, 1, 14.6, 1).lag == 15


def test_blowfly_deterministic_fixed_point():
    p = BlowflyParams(P=math.e, N0=1.0, sigma_d=0.1, sigma_p=0.1, tau=3.0, delta=50.0)
    y = simulate_blowfly(p, 40, 0, init=1.0, noise=False)
    assert np.allclose(y, 1.0, atol=1e-12)


def test_blowfly_fixed_point_small_noise_limit():
    p = BlowflyParams(P=math.e, N0=1.0, sigma_d=1e-6, sigma_p=1e-6, tau=3.0, delta=50.0)
    y = simulate_blowfly(p, 40, 0, init=1.0)
    assert np.allclose(y, 1.0, atol=1e-4)


def test_blowfly_geometric_decay_without_production():
    # P must be positive as a parameter; a vanishing P switches production off
    p = BlowflyParams(P=1e-300, N0=100.0, sigma_d=0.5, sigma_p=0.5, tau=2.0, delta=0.1)
    y = simulate_blowfly(p, 30, 0, init=180.0, noise=False)
    t = np.arange(1, 31)
    assert np.allclose(y, 180.0 * np.exp(-0.1 * t), rtol=1e-12)


def test_blowfly_determinism_and_nonnegativity():
    prior = default_blowfly_prior()
    rng = np.random.default_rng(7)
    for _ in range(30):
        theta = prior.sample(rng)
        a = simulate_blowfly(theta, 180, 11)
        b = simulate_blowfly(theta, 180, 11)
        assert a.tobytes() == b.tobytes()
        assert np.all(a >= 0)
        assert not np.array_equal(a, simulate_blowfly(theta, 180, 12))


def test_blowfly_lag_must_be_shorter_than_series():
    p = BlowflyParams(5.0, 300.0, 0.5, 0.5, 20.0, 0.2)
    with pytest.raises(ValueError):
        simulate_blowfly(p, 20, 0)


def test_blowfly_divergence_is_flagged():
    p = BlowflyParams(1e3, 1e15, 0.1, 0.1, 1.0, 0.01)
    with pytest.raises(SimulationDivergence):
        simulate_blowfly(p, 50, 0)


def test_blowfly_history_from_observations():
    p = BlowflyParams(5.0, 300.0, 0.5, 0.5, 3.0, 0.2)
    hist = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    a = simulate_blowfly(p, 10, 0, init=hist)
    b = simulate_blowfly(p, 10, 0, init=hist[-4:])
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        simulate_blowfly(p, 10, 0, init=hist[:2])


def test_blowfly_simulator_callable():
    sim = BlowflySimulator(T=50)
    theta = default_blowfly_prior().sample(0)
    assert sim(theta, 1).shape == (50,)


def test_normal_prior_log_density():
    prior = NormalPrior(mean=(1.0, -2.0), std=(2.0, 0.5))
    u = np.array([0.3, -1.0])
    expected = stats.norm(1.0, 2.0).logpdf(0.3) + stats.norm(-2.0, 0.5).logpdf(-1.0)
    assert prior.log_density_unconstrained(u) == pytest.approx(expected, abs=1e-12)


def test_dirichlet_prior_samples_simplex():
    t = DirichletPrior().sample(3)
    assert abs(t.sum() - 1) < 1e-12
