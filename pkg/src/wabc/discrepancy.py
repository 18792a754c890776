"""Distances between an observed data set and synthetic ones.

A :class:`DistanceSpec` names a method, a ground metric and an optional
transformation of raw series (delay reconstruction or curve embedding).
Binding it to the observed data precomputes everything that depends only
on the observed side: the transformed data, its sort order, the Hilbert
box mapping. The bound object is then called once per synthetic data set.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import distances as D
from .hilbert import DEFAULT_BITS, BoxMapping, hilbert_order
from .reconstruct import ReconstructionConfig, curve_embed, curve_lambda_heuristic, residual_reconstruct

METHODS = ("exact", "hilbert", "swap", "sinkhorn", "energy", "mmd", "euclidean")


@dataclass(frozen=True)
class DistanceSpec:
    """How to compare two raw data sets.

    ``curve`` switches on curve matching: both series are embedded as
    ``(t, y_t)`` and compared under the curve metric with weight ``lam``;
    ``lam=None`` picks it from the observed series with aspect ratio
    ``aspect`` (H, V).
    """

    method: str = "exact"
    p: float = 1.0
    reconstruction: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    curve: bool = False
    lam: float | None = None
    aspect: tuple[float, float] = (1.0, 1.0)
    bits: int = DEFAULT_BITS
    max_sweeps: int = 1000
    zeta: float | None = None
    bandwidth: float | None = None
    subsample: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown distance method {self.method!r}; choose from {METHODS}")

    def bind(self, observed) -> "BoundDistance":
        return BoundDistance(self, D.as_dataset(observed))


class BoundDistance:
    """Distance from a fixed observed data set; call with a synthetic one."""

    def __init__(self, spec: DistanceSpec, observed: np.ndarray):
        self.spec = spec
        self.raw = observed
        if spec.curve:
            lam = spec.lam
            if lam is None:
                lam = curve_lambda_heuristic(observed, *spec.aspect)
            self.metric = D.GroundMetric("curve", spec.p, lam)
        else:
            self.metric = D.GroundMetric("euclidean", spec.p)
        self.y = self.transform(observed)
        self.univariate = self.y.shape[1] == 1 and not spec.curve
        # transport costs under the Euclidean metric are at least the distance between means
        self.screens = (spec.method in ("exact", "hilbert", "swap") and not spec.curve
                        and not spec.subsample and not self.univariate)
        self.y_mean = self.y.mean(axis=0)
        if self.univariate:
            self.y_sorted = np.sort(self.y[:, 0])
        self.mapping = BoxMapping.from_data(self.y)
        if spec.method in ("hilbert", "swap") and not self.univariate:
            self.y_order, _ = hilbert_order(self.y, self.mapping, spec.bits)
        if spec.method == "mmd":
            self.bandwidth = spec.bandwidth or D.median_bandwidth(self.y)
        if spec.method == "sinkhorn":
            c = self.metric.cost(self.y, self.y)
            self.zeta = spec.zeta or (0.05 * float(np.median(c[c > 0])) if np.any(c > 0) else 1.0)

    def transform(self, data) -> np.ndarray:
        data = D.as_dataset(data)
        if self.spec.curve:
            return curve_embed(data)
        return self.spec.reconstruction(data)

    def __call__(self, synthetic, threshold: float | None = None) -> float:
        """Distance to ``synthetic``.

        With a ``threshold``, a value above it may be returned as a cheap
        lower bound (the distance between the means) instead of the exact
        distance; comparisons against the threshold are unaffected.
        """
        z = self.transform(synthetic)
        if threshold is not None and self.screens and z.shape[1] == self.y.shape[1]:
            gap = float(np.linalg.norm(z.mean(axis=0) - self.y_mean))
            if gap > threshold:
                return gap
        return self.between(z)

    def between(self, z: np.ndarray) -> float:
        """Distance from the (transformed) observed data to transformed ``z``."""
        spec = self.spec
        y = self.y
        if z.shape[1] != y.shape[1]:
            raise ValueError(f"dimension mismatch: {y.shape[1]} vs {z.shape[1]}")
        if spec.subsample:
            # seeded by the data itself: deterministic and safe to call from threads
            rng = np.random.default_rng(zlib.crc32(np.ascontiguousarray(z).tobytes()))
            m = spec.subsample
            y = y[rng.choice(y.shape[0], m, replace=False)]
            z = z[rng.choice(z.shape[0], m, replace=False)]
            return self._compute(y, z, reuse=False)
        return self._compute(y, z, reuse=True)

    def _compute(self, y, z, reuse):
        spec, p = self.spec, self.spec.p
        method = spec.method
        if method == "euclidean":
            if y.shape != z.shape:
                raise ValueError("vector distance needs equal shapes")
            return float(np.sqrt(np.sum((y - z) ** 2)))
        if method in ("exact", "hilbert", "swap") and self.univariate:
            ys = self.y_sorted if reuse else np.sort(y[:, 0])
            zs = np.sort(z[:, 0])
            if ys.shape[0] == zs.shape[0]:
                return D._root(float(np.mean(np.abs(ys - zs) ** p)), p)
            iy, iz, w = D.quantile_coupling(ys.shape[0], zs.shape[0])
            return D._root(float(np.sum(w * np.abs(ys[iy] - zs[iz]) ** p)), p)
        if method == "exact":
            if y.shape[0] == z.shape[0]:
                cost = self.metric.cost(y, z)
                rows, cols = linear_sum_assignment(cost)
                return D._root(float(cost[rows, cols].mean()), p)
            return D.exact_transport(y, z, self.metric, with_plan=False).value
        if method == "hilbert":
            if y.shape[0] != z.shape[0]:
                raise ValueError("Hilbert distance needs equal sizes")
            oy = self.y_order if reuse else hilbert_order(y, self.mapping, spec.bits)[0]
            oz, _ = hilbert_order(z, self.mapping, spec.bits)
            r = self.metric.paired(y[oy], z[oz])
            return D._root(float(np.mean(r**p)), p)
        if method == "swap":
            return D.swap_distance(y, z, self.metric, max_sweeps=spec.max_sweeps,
                                   mapping=self.mapping, bits=spec.bits).value
        if method == "sinkhorn":
            return D.sinkhorn_divergence(y, z, self.metric, zeta=self.zeta).value
        if method == "energy":
            return D.energy_distance(y, z, self.metric).value
        return D.mmd(y, z, s=self.bandwidth, metric=self.metric).value


class CombinedDistance:
    """Summary distance gated by a transport distance.

    Returns ``|eta(y) - eta(z)|`` when the primary distance is below the
    fixed threshold ``eps_h``, and ``+inf`` otherwise.
    """

    def __init__(self, primary: BoundDistance, eps_h: float, summary: Callable[[np.ndarray], float]):
        self.primary = primary
        self.eps_h = float(eps_h)
        self.summary = summary
        self.observed_summary = float(summary(primary.raw))

    def __call__(self, synthetic) -> float:
        if not self.primary(synthetic, self.eps_h) < self.eps_h:
            return np.inf
        return abs(self.observed_summary - float(self.summary(D.as_dataset(synthetic))))


def combine_distances(primary: DistanceSpec | BoundDistance, eps_h: float, summary, observed=None) -> CombinedDistance:
    if isinstance(primary, DistanceSpec):
        if observed is None:
            raise ValueError("observed data needed to bind the primary distance")
        primary = primary.bind(observed)
    return CombinedDistance(primary, eps_h, summary)


class ResidualDistance:
    """Compare residuals of the observed series at ``theta`` with a noise sample.

    Used with :class:`NoiseModel`, which draws the standard Normal sample;
    the sampler passes ``theta`` along because the observed side depends on it.
    """

    needs_theta = True

    def __init__(self, model, observed, p: float = 1.0):
        self.model = model
        self.raw = D.as_dataset(observed)
        self.p = p
        probe = model.default_prior().sample(np.random.default_rng(0), 1)[0]
        self.size = residual_reconstruct(model, probe, self.raw).shape[0]

    def __call__(self, synthetic, theta) -> float:
        w = np.sort(residual_reconstruct(self.model, theta, self.raw)[:, 0])
        z = np.sort(D.as_dataset(synthetic)[:, 0])
        if w.shape != z.shape:
            raise ValueError("noise sample must match the residual count")
        return D._root(float(np.mean(np.abs(w - z) ** self.p)), self.p)


class NoiseModel:
    """Model stand-in that simulates the noise law for residual comparisons."""

    def __init__(self, model, size: int):
        self.base = model
        self.size = size
        self.name = f"{model.name}-noise"
        self.dim = model.dim

    def valid(self, theta) -> bool:
        return self.base.valid(theta)

    def simulate(self, theta, n, rng) -> np.ndarray:
        return rng.standard_normal((self.size, 1))


class SummaryDistance:
    """Euclidean distance between summary vectors of observed and synthetic data."""

    def __init__(self, observed, summary: Callable[[np.ndarray], np.ndarray]):
        self.summary = summary
        self.raw = D.as_dataset(observed)
        self.observed_summary = np.atleast_1d(np.asarray(summary(self.raw), dtype=float))

    def __call__(self, synthetic) -> float:
        s = np.atleast_1d(np.asarray(self.summary(D.as_dataset(synthetic)), dtype=float))
        return float(np.sqrt(np.sum((s - self.observed_summary) ** 2)))
