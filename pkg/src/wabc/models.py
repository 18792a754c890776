"""Generative models used in the experiments.

Each model simulates ``n`` observations given a parameter vector and a
``numpy.random.Generator``. Models whose randomness has a fixed dimension
split simulation into ``innovations`` (parameter-free draws) and
``transform`` (a deterministic map of parameters and innovations), so that
common random numbers can be reused across parameter values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from . import _kernels
from .distances import as_dataset
from .priors import Exponential, IncrementPrior, Normal, Prior, Uniform


class SimulationError(RuntimeError):
    """A simulation was refused because it would exceed a resource cap."""


@dataclass
class InnovationStream:
    """Replayable seeded source of randomness.

    Backed by the counter-based Philox generator: every call to
    :meth:`generator` restarts the stream from the beginning. Fixed-size
    innovation arrays are memoized per (model, n).
    """

    seed: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed))

    def innovations(self, model, n: int):
        key = (model.name, n)
        if key not in self._cache:
            self._cache[key] = model.innovations(n, self.generator())
        return self._cache[key]


class GenerativeModel:
    """Base class. Subclasses set ``name``, ``param_names``, ``d_y``."""

    name = "model"
    param_names: tuple[str, ...] = ()
    d_y = 1
    ordered = False
    fixed_innovations = False
    location_scale = False

    @property
    def dim(self) -> int:
        return len(self.param_names)

    def default_prior(self) -> Prior:
        raise NotImplementedError

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"{self.name} expects {self.dim} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        self._check(theta)
        return theta

    def _check(self, theta):
        pass

    def valid(self, theta) -> bool:
        try:
            self.check(theta)
        except ValueError:
            return False
        return True

    def simulate(self, theta, n: int, rng) -> np.ndarray:
        theta = self.check(theta)
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.transform(theta, self.innovations(n, rng))

    def simulate_crn(self, theta, n: int, stream: InnovationStream) -> np.ndarray:
        """Simulate as a deterministic function of ``theta`` and the stream."""
        if self.fixed_innovations:
            return self.transform(self.check(theta), stream.innovations(self, n))
        return self.simulate(theta, n, stream.generator())

    def innovations(self, n, rng):
        raise NotImplementedError

    def transform(self, theta, u):
        raise NotImplementedError

    def transform_rows(self, theta, U) -> np.ndarray:
        """Apply :meth:`transform` to each row of scalar innovations ``U``
        (shape ``(k, m)``); univariate models only."""
        return np.vstack([self.transform(theta, u)[:, 0] for u in U])


def gandk_quantile(r, a, b, g, k):
    """Quantile function of the g-and-k distribution at probability ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r >= 1)):
        raise ValueError("r must lie in (0, 1)")
    return _gandk_transform(ndtri(r), a, b, g, k)


def _gandk_transform(z, a, b, g, k):
    # (1 - exp(-g z)) / (1 + exp(-g z)) == tanh(g z / 2)
    return a + b * (1.0 + 0.8 * np.tanh(0.5 * g * z)) * (1.0 + z * z) ** k * z


class GandK(GenerativeModel):
    name = "gandk"
    param_names = ("a", "b", "g", "k")
    fixed_innovations = True

    def _check(self, theta):
        if theta[1] < 0 or theta[3] < 0:
            raise ValueError("g-and-k needs b >= 0 and k >= 0")

    def default_prior(self):
        return Prior([Uniform(0, 10)] * 4, self.param_names)

    def innovations(self, n, rng):
        return rng.standard_normal(n)

    def transform(self, theta, u):
        return _gandk_transform(u, *theta)[:, None]

    def transform_rows(self, theta, U):
        return _gandk_transform(U, *theta)


class BivariateGandK(GenerativeModel):
    name = "bivariate_gandk"
    param_names = ("a1", "b1", "g1", "k1", "a2", "b2", "g2", "k2", "rho")
    d_y = 2
    fixed_innovations = True
    truth = (3.0, 1.0, 1.0, 0.5, 4.0, 0.5, 2.0, 0.4, 0.6)

    def _check(self, theta):
        if not abs(theta[8]) < 1:
            raise ValueError("correlation must satisfy |rho| < 1")
        if min(theta[1], theta[3], theta[5], theta[7]) < 0:
            raise ValueError("g-and-k needs b >= 0 and k >= 0")

    def default_prior(self):
        return Prior([Uniform(0, 10)] * 8 + [Uniform(-1, 1)], self.param_names)

    def innovations(self, n, rng):
        return rng.standard_normal((n, 2))

    def transform(self, theta, u):
        rho = theta[8]
        z1 = u[:, 0]
        z2 = rho * u[:, 0] + math.sqrt(1.0 - rho * rho) * u[:, 1]
        return np.column_stack([_gandk_transform(z1, *theta[:4]), _gandk_transform(z2, *theta[4:8])])


class ToggleSwitch(GenerativeModel):
    """Terminal expression of a two-gene toggle switch, observed with noise."""

    name = "toggle_switch"
    param_names = ("alpha1", "alpha2", "beta1", "beta2", "mu", "sigma", "gamma")
    truth = (22.0, 12.0, 4.0, 4.5, 325.0, 0.25, 0.15)

    def __init__(self, horizon: int = 300, noise: float = 0.5, start: float = 10.0):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = int(horizon)
        self.noise = float(noise)
        self.start = float(start)

    def _check(self, theta):
        if np.any(theta[:4] < 0) or theta[5] < 0 or theta[6] < 0:
            raise ValueError("toggle-switch rates and noise parameters must be nonnegative")

    def default_prior(self):
        return Prior([Uniform(0, 50), Uniform(0, 50), Uniform(0, 5), Uniform(0, 5),
                      Uniform(250, 450), Uniform(0, 0.5), Uniform(0, 0.4)], self.param_names)

    def simulate(self, theta, n, rng):
        theta = self.check(theta)
        a1, a2, b1, b2, mu, sigma, gamma = theta
        normals = rng.standard_normal((n, self.horizon, 2))
        u = _kernels.toggle_paths(a1, a2, b1, b2, self.noise, normals, self.start)
        eps = rng.standard_normal(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            sd = mu * sigma / u**gamma
        return (mu + u + sd * eps)[:, None]


class MG1Queue(GenerativeModel):
    """Inter-departure times of a single-server queue with uniform service."""

    name = "mg1"
    param_names = ("theta1", "theta2", "theta3")
    ordered = True
    fixed_innovations = True
    truth = (4.0, 7.0, 0.15)

    def _check(self, theta):
        if theta[0] < 0 or theta[1] < theta[0]:
            raise ValueError("service bounds need 0 <= theta1 <= theta2")
        if theta[2] <= 0:
            raise ValueError("arrival rate theta3 must be positive")

    def default_prior(self, max_theta1: float | None = None):
        first = Uniform(0, 10 if max_theta1 is None else min(10.0, max_theta1))
        return IncrementPrior([first, Uniform(0, 10), Uniform(0, 1 / 3)], self.param_names)

    def innovations(self, n, rng):
        service = rng.random(n)
        arrival = rng.standard_exponential(n)
        return service, arrival

    def transform(self, theta, u):
        service, arrival = u
        t1, t2, t3 = theta
        served = t1 + (t2 - t1) * service
        arrivals = np.cumsum(arrival / t3)
        done = np.cumsum(served)
        before = np.concatenate([[0.0], done[:-1]])
        # D_i = S_i + max_{j <= i} (A_j - S_{j-1})
        departures = done + np.maximum.accumulate(arrivals - before)
        return np.diff(departures, prepend=0.0)[:, None]


class AR1(GenerativeModel):
    name = "ar1"
    param_names = ("phi", "log_sigma")
    ordered = True
    fixed_innovations = True
    truth = (0.7, 0.9)

    def _check(self, theta):
        if not abs(theta[0]) < 1:
            raise ValueError("stationarity needs |phi| < 1")

    def default_prior(self):
        return Prior([Uniform(-1, 1), Normal(0, 1)], self.param_names)

    def innovations(self, n, rng):
        return rng.standard_normal(n)

    def transform(self, theta, u):
        phi, sigma = theta[0], math.exp(theta[1])
        x = u.copy()
        x[0] = u[0] / math.sqrt(1.0 - phi * phi)
        return lfilter([sigma], [1.0, -phi], x)[:, None]

    def residuals(self, theta, series):
        phi, sigma = theta[0], math.exp(theta[1])
        y = series[:, 0]
        return ((y[1:] - phi * y[:-1]) / sigma)[:, None]


class Cosine(GenerativeModel):
    name = "cosine"
    param_names = ("omega", "phi", "log_sigma", "log_A")
    ordered = True
    fixed_innovations = True
    truth = (1 / 80, math.pi / 4, 0.0, math.log(2.0))

    def default_prior(self):
        return Prior([Uniform(0, 0.1), Uniform(0, 2 * math.pi), Normal(0, 1), Normal(0, 1)], self.param_names)

    def innovations(self, n, rng):
        return rng.standard_normal(n)

    def _signal(self, theta, n):
        omega, phase, _, log_a = theta
        t = np.arange(1, n + 1)
        return math.exp(log_a) * np.cos(2 * math.pi * omega * t + phase)

    def transform(self, theta, u):
        return (self._signal(theta, u.shape[0]) + math.exp(theta[2]) * u)[:, None]

    def residuals(self, theta, series):
        y = series[:, 0]
        return ((y - self._signal(theta, y.shape[0])) / math.exp(theta[2]))[:, None]


class LevySV(GenerativeModel):
    """Stochastic volatility driven by a compound-Poisson Levy process."""

    name = "levy_sv"
    param_names = ("mu", "beta", "xi", "omega2", "lam")
    ordered = True
    truth = (0.0, 0.0, 0.5, 0.0625, 0.01)

    def __init__(self, max_jumps: float = 2e7):
        self.max_jumps = max_jumps

    def _check(self, theta):
        if theta[2] <= 0 or theta[3] <= 0 or theta[4] <= 0:
            raise ValueError("xi, omega2 and lambda must be positive")

    def default_prior(self):
        sd = math.sqrt(2.0)
        return Prior([Normal(0, sd), Normal(0, sd), Exponential(0.2), Exponential(0.2), Exponential(1.0)],
                     self.param_names)

    def simulate(self, theta, n, rng, return_latent=False):
        mu, beta, xi, omega2, lam = self.check(theta)
        shape = xi * xi / omega2
        rate = xi / omega2
        if lam * shape * n > self.max_jumps:
            raise SimulationError(f"expected {lam * shape * n:.3g} jumps exceeds cap {self.max_jumps:.3g}")
        z0 = rng.gamma(shape, 1.0 / rate)
        counts = rng.poisson(lam * shape, n)
        total = int(counts.sum())
        offsets = rng.random(total)
        sizes = rng.exponential(1.0 / rate, total)
        step = np.repeat(np.arange(n), counts)
        jumps = np.bincount(step, weights=np.exp(-lam * (1.0 - offsets)) * sizes, minlength=n)
        mass = np.bincount(step, weights=sizes, minlength=n)
        decay = math.exp(-lam)
        z = lfilter([1.0], [1.0, -decay], jumps, zi=[decay * z0])[0]
        z_prev = np.concatenate([[z0], z[:-1]])
        v = np.maximum((z_prev - z + mass) / lam, 0.0)
        y = mu + beta * v + np.sqrt(v) * rng.standard_normal(n)
        if return_latent:
            return y[:, None], z, v
        return y[:, None]


class NormalLocation(GenerativeModel):
    """Bivariate Normal with unknown mean and known covariance."""

    name = "normal_location"
    param_names = ("theta1", "theta2")
    d_y = 2
    fixed_innovations = True
    covariance = np.array([[1.0, 0.5], [0.5, 1.0]])
    prior_variance = 25.0

    def default_prior(self):
        sd = math.sqrt(self.prior_variance)
        return Prior([Normal(0, sd), Normal(0, sd)], self.param_names)

    def innovations(self, n, rng):
        return rng.standard_normal((n, 2))

    def transform(self, theta, u):
        return theta + u @ self._chol_t

    @property
    def _chol_t(self):
        if getattr(self, "_chol_cache", None) is None:
            self._chol_cache = np.linalg.cholesky(self.covariance).T
        return self._chol_cache


class UnivariateNormal(GenerativeModel):
    """Normal(mu, sigma^2); the fitted model in the point-estimation examples."""

    name = "normal"
    param_names = ("mu", "sigma")
    fixed_innovations = True
    # transform is loc + scale * u with (loc, scale) = theta
    location_scale = True

    def _check(self, theta):
        if theta[1] <= 0:
            raise ValueError("sigma must be positive")

    def default_prior(self):
        return Prior([Normal(0, 5), Uniform(0, 5)], self.param_names)

    def innovations(self, n, rng):
        return rng.standard_normal(n)

    def transform(self, theta, u):
        return (theta[0] + theta[1] * u)[:, None]

    def transform_rows(self, theta, U):
        return theta[0] + theta[1] * U


class GammaData(GenerativeModel):
    name = "gamma"
    param_names = ("shape", "rate")
    fixed_innovations = False

    def _check(self, theta):
        if theta[0] <= 0 or theta[1] <= 0:
            raise ValueError("gamma needs positive shape and rate")

    def simulate(self, theta, n, rng):
        shape, rate = self.check(theta)
        return rng.gamma(shape, 1.0 / rate, n)[:, None]


class CauchyData(GenerativeModel):
    name = "cauchy"
    param_names = ("location", "scale")

    def _check(self, theta):
        if theta[1] <= 0:
            raise ValueError("cauchy scale must be positive")

    def simulate(self, theta, n, rng):
        loc, scale = self.check(theta)
        return (loc + scale * rng.standard_cauchy(n))[:, None]


MODELS = {
    cls.name: cls
    for cls in (GandK, BivariateGandK, ToggleSwitch, MG1Queue, AR1, Cosine, LevySV,
                NormalLocation, UnivariateNormal, GammaData, CauchyData)
}


def get_model(name: str, **options) -> GenerativeModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**options)


# convenience wrappers mirroring the per-model operations

def gandk_simulate(theta, n, rng):
    return GandK().simulate(theta, n, rng)


def bivariate_gandk_simulate(theta, n, rng):
    return BivariateGandK().simulate(theta, n, rng)


def toggle_switch_simulate(theta, n, rng, horizon=300, noise=0.5):
    return ToggleSwitch(horizon, noise).simulate(theta, n, rng)


def mg1_simulate(theta, n, rng):
    return MG1Queue().simulate(theta, n, rng)


def ar1_simulate(theta, n, rng):
    return AR1().simulate(theta, n, rng)


def cosine_simulate(theta, n, rng):
    return Cosine().simulate(theta, n, rng)


def levy_sv_simulate(theta, n, rng):
    return LevySV().simulate(theta, n, rng)


def normal_location_simulate(theta, n, rng):
    return NormalLocation().simulate(theta, n, rng)


def acf_summary(series, lags: int = 50) -> float:
    """Sum of the first ``lags`` sample autocorrelations of the squared series."""
    x = as_dataset(series)[:, 0] ** 2
    n = x.shape[0]
    if lags < 0:
        raise ValueError("lags must be nonnegative")
    if n <= lags:
        raise ValueError(f"series of length {n} too short for {lags} lags")
    if lags == 0:
        return 0.0
    x = x - x.mean()
    c0 = float(x @ x)
    if c0 == 0:
        return 0.0
    acf = np.array([x[:-l] @ x[l:] for l in range(1, lags + 1)]) / c0
    return float(acf.sum())


@dataclass
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def sample(self, rng, size):
        return rng.multivariate_normal(self.mean, self.cov, size)


def normal_location_posterior(data, prior_mean=None, prior_variance=25.0,
                              covariance=NormalLocation.covariance) -> GaussianPosterior:
    """Conjugate posterior of the mean of a Normal with known covariance."""
    d = covariance.shape[0]
    prior_mean = np.zeros(d) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    prior_prec = np.eye(d) / prior_variance
    if data is None or len(data) == 0:
        return GaussianPosterior(prior_mean, np.linalg.inv(prior_prec))
    data = as_dataset(data)
    noise_prec = np.linalg.inv(covariance)
    prec = prior_prec + data.shape[0] * noise_prec
    cov = np.linalg.inv(prec)
    mean = cov @ (prior_prec @ prior_mean + noise_prec @ data.sum(axis=0))
    return GaussianPosterior(mean, cov)
