"""Independent-coordinate priors with vectorized log-density and sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError("uniform prior needs high > low")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, -math.log(self.high - self.low), -np.inf)

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    @property
    def scale(self):
        return (self.high - self.low) / math.sqrt(12.0)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if self.sd <= 0:
            raise ValueError("normal prior needs sd > 0")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2 * math.pi)

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size)

    @property
    def scale(self):
        return self.sd


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("exponential prior needs rate > 0")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, math.log(self.rate) - self.rate * x, -np.inf)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    @property
    def scale(self):
        return 1.0 / self.rate


FAMILIES = {"uniform": Uniform, "normal": Normal, "exponential": Exponential}


def component(spec) -> Uniform | Normal | Exponential:
    """Build a component from ``{"family": "uniform", "low": 0, "high": 1}``-style specs."""
    if isinstance(spec, (Uniform, Normal, Exponential)):
        return spec
    spec = dict(spec)
    family = spec.pop("family")
    try:
        return FAMILIES[family](**spec)
    except KeyError:
        raise ValueError(f"unknown prior family {family!r}") from None


class Prior:
    """Product of independent one-dimensional components."""

    def __init__(self, components, names=None):
        self.components = [component(c) for c in components]
        self.names = list(names) if names is not None else [f"theta_{i + 1}" for i in range(len(self.components))]
        if len(self.names) != len(self.components):
            raise ValueError("one name per prior component")

    @property
    def dim(self) -> int:
        return len(self.components)

    def _latent(self, theta):
        return theta

    def _from_latent(self, latent):
        return latent

    def sample(self, rng, size: int) -> np.ndarray:
        latent = np.column_stack([c.sample(rng, size) for c in self.components])
        return self._from_latent(latent)

    def logpdf(self, theta) -> np.ndarray | float:
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        latent = self._latent(np.atleast_2d(theta))
        out = np.zeros(latent.shape[0])
        for j, c in enumerate(self.components):
            out = out + c.logpdf(latent[:, j])
        return float(out[0]) if single else out

    def scales(self) -> np.ndarray:
        return np.array([c.scale for c in self.components])

    def describe(self) -> list[dict]:
        out = []
        for name, c in zip(self.names, self.components):
            d = {"name": name, "family": type(c).__name__.lower()}
            d.update(c.__dict__)
            out.append(d)
        return out


class IncrementPrior(Prior):
    """Prior placed on ``(theta_1, theta_2 - theta_1, theta_3, ...)``.

    Used for the queue, where service times are uniform on
    ``[theta_1, theta_2]``. The map has unit Jacobian.
    """

    def _latent(self, theta):
        latent = theta.copy()
        latent[:, 1] = theta[:, 1] - theta[:, 0]
        return latent

    def _from_latent(self, latent):
        theta = latent.copy()
        theta[:, 1] = latent[:, 0] + latent[:, 1]
        return theta
