import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.cluster.vq import kmeans2

from oracles import gandk_quantile_hp, grid_posterior_moments
from wabc.models import (AR1, MODELS, BivariateGandK, Cosine, GandK, InnovationStream, LevySV, MG1Queue,
                         NormalLocation, SimulationError, ToggleSwitch, acf_summary, gandk_quantile, get_model,
                         normal_location_posterior)
from wabc.priors import Exponential, IncrementPrior, Normal, Prior, Uniform

# g-and-k quantile at r = 0.975, (a, b, g, k) = (3, 1, 1, 0.5), from the 40-digit oracle
GANDK_Q975 = 9.9106635193335738


def rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------- g-and-k


def test_gandk_median_is_a():
    assert gandk_quantile(0.5, 3.0, 1.0, 2.0, 0.4) == 3.0


def test_gandk_reduces_to_normal():
    r = np.array([0.01, 0.2, 0.7, 0.99])
    assert np.allclose(gandk_quantile(r, 1.5, 2.0, 0.0, 0.0), 1.5 + 2.0 * stats.norm.ppf(r), atol=1e-12)


def test_gandk_pinned_value():
    assert gandk_quantile_hp("0.975", 3, 1, 1, 0.5) == pytest.approx(GANDK_Q975, abs=1e-15)
    assert gandk_quantile(0.975, 3, 1, 1, 0.5) == pytest.approx(GANDK_Q975, abs=1e-9)


@pytest.mark.parametrize("r", [1e-6, 0.03, 0.31, 0.5001, 0.88, 1 - 1e-7])
def test_gandk_matches_high_precision(r):
    assert gandk_quantile(r, 0.5, 1.3, -0.7, 0.2) == pytest.approx(gandk_quantile_hp(r, 0.5, 1.3, -0.7, 0.2),
                                                                  rel=1e-9, abs=1e-9)


def test_gandk_quantile_domain():
    with pytest.raises(ValueError):
        gandk_quantile(1.0, 0, 1, 0, 0)


def test_gandk_simulate_normal_case_moments():
    y = GandK().simulate([2.0, 1.5, 0.0, 0.0], 100_000, rng())[:, 0]
    se = 1.5 / math.sqrt(1e5)
    assert abs(y.mean() - 2.0) < 4 * se
    assert abs(y.std() - 1.5) < 0.02


def test_gandk_degenerate_and_reproducible():
    assert np.all(GandK().simulate([3.0, 0.0, 1.0, 0.5], 50, rng()) == 3.0)
    a = GandK().simulate([3, 1, 1, 0.5], 20, rng(5))
    assert np.array_equal(a, GandK().simulate([3, 1, 1, 0.5], 20, rng(5)))
    assert not np.array_equal(a, GandK().simulate([3, 1, 1, 0.5], 20, rng(6)))


def test_bivariate_gandk_independent_case():
    theta = [0, 1, 0, 0, 0, 1, 0, 0, 0.0]
    y = BivariateGandK().simulate(theta, 100_000, rng())
    assert abs(np.corrcoef(y.T)[0, 1]) < 0.015


def test_bivariate_marginal_matches_univariate():
    theta = np.array(BivariateGandK.truth)
    y = BivariateGandK().simulate(theta, 100_000, rng(1))[:, 0]
    x = GandK().simulate(theta[:4], 100_000, rng(2))[:, 0]
    assert stats.ks_2samp(x, y).pvalue > 1e-3


def test_bivariate_correlation_bound():
    with pytest.raises(ValueError):
        BivariateGandK().simulate([3, 1, 1, .5, 4, .5, 2, .4, 1.0], 5, rng())


# ---------------------------------------------------------------- toggle switch


def test_toggle_noise_free_chain_is_deterministic():
    model = ToggleSwitch(horizon=3, noise=0.0)
    theta = [0, 0, 4, 4.5, 325, 0.0, 0.15]
    u = 10.0
    for _ in range(3):
        u = u - (1 + 0.03 * u)
    y = model.simulate(theta, 7, rng(1))[:, 0]
    assert np.allclose(y, 325 + u)


def test_toggle_states_nonnegative():
    from wabc import _kernels

    normals = rng(3).standard_normal((200, 300, 2)) * 3
    u = _kernels.toggle_paths(2.0, 2.0, 4.0, 4.5, 0.5, normals, 10.0)
    assert np.all(u >= 0)


def test_toggle_truncated_increment_law():
    from wabc import _kernels

    # drift -0.3, scale 0.5: increment must be Normal(0, 0.25) conditioned on >= 0.3
    xi = rng(4).standard_normal(50_000)
    inc = np.array([_kernels._truncated_increment(0.5, -0.3, x) for x in xi])
    assert np.all(inc >= 0.3 - 1e-12)
    ref = stats.truncnorm(0.6, np.inf, scale=0.5)
    assert stats.kstest(inc, ref.cdf).pvalue > 1e-3


def test_toggle_bimodal_at_default():
    model = ToggleSwitch()
    y = model.simulate(model.truth, 2000, rng(0))
    centres, labels = kmeans2(y, 2, seed=1, minit="++")
    sd = [y[labels == k, 0].std() for k in (0, 1)]
    assert abs(centres[0, 0] - centres[1, 0]) > 2 * sum(sd)
    assert np.bincount(labels).min() > 200


# ---------------------------------------------------------------- M/G/1


def test_mg1_first_departure_and_lower_bound():
    model = MG1Queue()
    theta = np.array([4.0, 7.0, 0.15])
    service, arrival = model.innovations(50, rng(2))
    y = model.transform(theta, (service, arrival))[:, 0]
    assert y[0] == pytest.approx(4 + 3 * service[0] + arrival[0] / 0.15)
    assert np.all(y >= 4.0)
    assert y.shape == (50,)


def test_mg1_matches_queue_recursion():
    theta = (1.0, 3.0, 0.5)
    service, arrival = MG1Queue().innovations(200, rng(3))
    y = MG1Queue().transform(np.array(theta), (service, arrival))[:, 0]
    u = 1 + 2 * service
    w = arrival / 0.5
    dep = []
    for i in range(200):
        dep.append(u[i] + max(0.0, w[: i + 1].sum() - sum(dep)))
    assert np.allclose(y, dep)


def test_mg1_order_constraint():
    with pytest.raises(ValueError):
        MG1Queue().simulate([5.0, 4.0, 0.1], 10, rng())


# ---------------------------------------------------------------- AR(1)


def test_ar1_white_noise_case():
    y = AR1().simulate([0.0, math.log(2.0)], 100_000, rng())[:, 0]
    assert abs(y.std() - 2.0) < 0.02
    assert abs(np.corrcoef(y[1:], y[:-1])[0, 1]) < 0.015


def test_ar1_stationary_moments():
    phi, sigma = 0.7, math.exp(0.9)
    y = AR1().simulate([phi, 0.9], 100_000, rng(1))[:, 0]
    var = sigma**2 / (1 - phi**2)
    # variance of the sample variance of an AR(1): 2 var^2 (1 + phi^2) / ((1 - phi^2) n)
    se = var * math.sqrt(2 * (1 + phi**2) / ((1 - phi**2) * 1e5))
    assert abs(y.var() - var) < 3 * se
    assert abs(np.corrcoef(y[1:], y[:-1])[0, 1] - phi) < 0.01


def test_ar1_stationarity_required():
    with pytest.raises(ValueError):
        AR1().simulate([1.0, 0.0], 10, rng())


# ---------------------------------------------------------------- cosine


def test_cosine_noise_free_and_signal_free():
    t = np.arange(1, 101)
    y = Cosine().simulate([1 / 80, math.pi / 4, -800.0, math.log(2)], 100, rng())[:, 0]
    assert np.allclose(y, 2 * np.cos(2 * math.pi * t / 80 + math.pi / 4), atol=1e-12)
    z = Cosine().simulate([1 / 80, 0.3, 0.0, -800.0], 50_000, rng(1))[:, 0]
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02


# ---------------------------------------------------------------- Levy SV


def test_levy_sv_latent_nonnegative_and_mean():
    theta = [0.0, 0.0, 0.5, 0.0625, 0.01]
    y, z, v = LevySV().simulate(theta, 50_000, rng(2), return_latent=True)
    assert np.all(z >= 0) and np.all(v >= 0)
    # stationary mean of z is xi; strong autocorrelation widens the band
    assert abs(z.mean() - 0.5) < 0.1
    assert abs(y.mean()) < 0.02


def test_levy_sv_parameter_checks_and_cap():
    with pytest.raises(ValueError):
        LevySV().simulate([0, 0, -1, 0.1, 0.1], 10, rng())
    with pytest.raises(SimulationError):
        LevySV(max_jumps=10).simulate([0, 0, 0.5, 0.0625, 0.01], 1000, rng())


# ---------------------------------------------------------------- normal location


def test_normal_location_moments():
    y = NormalLocation().simulate([1.0, -2.0], 100_000, rng())
    assert np.allclose(y.mean(axis=0), [1, -2], atol=0.015)
    assert np.allclose(np.cov(y.T), [[1, 0.5], [0.5, 1]], atol=0.02)


def test_posterior_without_data_is_prior():
    post = normal_location_posterior(np.empty((0, 2)))
    assert np.allclose(post.mean, 0) and np.allclose(post.cov, 25 * np.eye(2))


def test_posterior_large_n_tracks_sample_mean():
    y = NormalLocation().simulate([0.4, -0.8], 20_000, rng())
    assert np.allclose(normal_location_posterior(y).mean, y.mean(axis=0), atol=1e-3)


def test_posterior_single_observation_matches_quadrature():
    x = np.array([[1.3, -0.4]])
    post = normal_location_posterior(x)
    mean, cov = grid_posterior_moments(x, NormalLocation.covariance, 25.0, half_width=8.0, points=801)
    assert np.allclose(post.mean, mean, atol=1e-3)
    assert np.allclose(post.cov, cov, atol=1e-3)


# ---------------------------------------------------------------- summaries


def test_acf_white_noise_band():
    y = rng().standard_normal(20_000)
    assert abs(acf_summary(y, 50)) < 3 * math.sqrt(50 / 20_000) * math.sqrt(50)


def test_acf_slowly_varying_series_near_lag_count():
    t = np.arange(5000)
    y = 5 + 1e-3 * t + 1e-6 * rng().standard_normal(5000)
    assert acf_summary(y, 50) > 0.9 * 50


def test_acf_zero_lags_and_short_series():
    assert acf_summary(rng().standard_normal(10), 0) == 0
    with pytest.raises(ValueError):
        acf_summary(np.ones(10), 10)


# ---------------------------------------------------------------- common behaviour

THETAS = {
    "gandk": [3, 1, 1, 0.5],
    "bivariate_gandk": BivariateGandK.truth,
    "toggle_switch": ToggleSwitch.truth,
    "mg1": MG1Queue.truth,
    "ar1": AR1.truth,
    "cosine": Cosine.truth,
    "levy_sv": LevySV.truth,
    "normal_location": [0.5, -0.5],
    "normal": [0.0, 1.0],
    "gamma": [10.0, 5.0],
    "cauchy": [0.0, 1.0],
}


@pytest.mark.parametrize("name", sorted(MODELS))
def test_simulate_deterministic_given_seed(name):
    model = get_model(name)
    a = model.simulate(THETAS[name], 30, rng(9))
    assert np.array_equal(a, model.simulate(THETAS[name], 30, rng(9)))
    assert not np.array_equal(a, model.simulate(THETAS[name], 30, rng(10)))
    assert a.shape == (30, model.d_y)


@pytest.mark.parametrize("name", ["gandk", "ar1", "cosine", "normal_location", "mg1"])
def test_crn_equals_simulate_on_same_stream(name):
    model = get_model(name)
    stream = InnovationStream(1234)
    a = model.simulate_crn(THETAS[name], 40, stream)
    b = model.simulate(THETAS[name], 40, stream.generator())
    assert np.array_equal(a, b)
    assert np.array_equal(a, model.simulate_crn(THETAS[name], 40, InnovationStream(1234)))


def test_stream_replays():
    s = InnovationStream(7)
    assert np.array_equal(s.generator().random(5), s.generator().random(5))


def test_unknown_model():
    with pytest.raises(ValueError):
        get_model("nope")


# ---------------------------------------------------------------- priors


@pytest.mark.parametrize("comp,lo,hi", [(Uniform(-1, 3), -1, 3), (Normal(2, 0.5), -np.inf, np.inf),
                                        (Exponential(0.2), 0, np.inf)])
def test_prior_density_integrates_to_one(comp, lo, hi):
    val, _ = integrate.quad(lambda x: float(np.exp(comp.logpdf(x))), lo, hi)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_prior_support_and_sampling():
    prior = Prior([Uniform(0, 1), Exponential(1.0), Normal(0, 1)])
    x = prior.sample(rng(), 1000)
    assert np.all(np.isfinite(prior.logpdf(x)))
    assert prior.logpdf([-0.1, 1.0, 0.0]) == -np.inf
    assert prior.logpdf([0.5, -1.0, 0.0]) == -np.inf


def test_increment_prior_orders_coordinates():
    prior = MG1Queue().default_prior()
    x = prior.sample(rng(), 2000)
    assert np.all(x[:, 1] >= x[:, 0])
    assert np.all(np.isfinite(prior.logpdf(x)))
    assert prior.logpdf([5.0, 4.0, 0.1]) == -np.inf
    capped = MG1Queue().default_prior(max_theta1=3.0).sample(rng(), 1000)
    assert capped[:, 0].max() <= 3.0
    assert isinstance(prior, IncrementPrior)
