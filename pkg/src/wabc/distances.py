"""Transport-type distances between unweighted empirical distributions.

A data set is an ``(n, d)`` float array, read as the uniform measure on its
rows. Every function returns a :class:`DistanceResult` so that callers can
inspect solver diagnostics (sweeps, iterations, plans) next to the value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist, pdist
from scipy.special import logsumexp

from . import _kernels
from .hilbert import DEFAULT_BITS, BoxMapping, hilbert_order


def as_dataset(values) -> np.ndarray:
    """Coerce to a finite ``(n, d)`` float array; 1D input becomes one column."""
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"expected an (n, d) data set, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data set contains non-finite values")
    return x


@dataclass(frozen=True)
class GroundMetric:
    """Point-to-point distance and transport order.

    ``kind="curve"`` reads the first coordinate as a time index and uses
    ``|y - z| + lam * |t - s|`` on the remaining coordinates.
    """

    kind: str = "euclidean"
    p: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "curve"):
            raise ValueError(f"unknown ground metric {self.kind!r}")
        if self.p < 1:
            raise ValueError("transport order p must be >= 1")
        if self.lam < 0:
            raise ValueError("curve-matching weight must be nonnegative")

    def pairwise(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        if self.kind == "euclidean":
            return cdist(y, z)
        space = cdist(y[:, 1:], z[:, 1:])
        return space + self.lam * np.abs(y[:, :1] - z[:, :1].T)

    def paired(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Row-by-row distances ``rho(y_i, z_i)``."""
        if self.kind == "euclidean":
            return np.sqrt(((y - z) ** 2).sum(axis=1))
        space = np.sqrt(((y[:, 1:] - z[:, 1:]) ** 2).sum(axis=1))
        return space + self.lam * np.abs(y[:, 0] - z[:, 0])

    def cost(self, y, z) -> np.ndarray:
        c = self.pairwise(y, z)
        return c if self.p == 1 else c**self.p


EUCLIDEAN = GroundMetric()


@dataclass
class DistanceResult:
    value: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)


def _check_pair(y, z, same_size=False):
    y = as_dataset(y)
    z = as_dataset(z)
    if y.shape[1] != z.shape[1]:
        raise ValueError(f"dimension mismatch: {y.shape[1]} vs {z.shape[1]}")
    if same_size and y.shape[0] != z.shape[0]:
        raise ValueError(f"size mismatch: {y.shape[0]} vs {z.shape[0]}")
    return y, z


def _root(cost: float, p: float) -> float:
    cost = max(cost, 0.0)
    return cost if p == 1 else cost ** (1.0 / p)


def _assignment_value(y, z, sigma, metric: GroundMetric) -> float:
    r = metric.paired(y, z[sigma])
    return _root(float(np.mean(r**metric.p)), metric.p)


def wasserstein_1d(y, z, p: float = 1.0) -> DistanceResult:
    """Exact W_p between two univariate samples of equal size, by sorting."""
    y, z = _check_pair(y, z, same_size=True)
    if y.shape[1] != 1:
        raise ValueError("wasserstein_1d needs univariate data")
    diff = np.abs(np.sort(y[:, 0]) - np.sort(z[:, 0]))
    return DistanceResult(_root(float(np.mean(diff**p)), p), "wasserstein_1d")


def quantile_coupling(n: int, m: int):
    """Monotone coupling of two sorted samples of sizes ``n`` and ``m``.

    Returns index arrays ``(iy, iz)`` and masses ``w`` over the ``n + m - 1``
    (at most) pieces where both empirical quantile functions are constant.
    """
    if m % n == 0:
        reps = m // n
        return np.repeat(np.arange(n), reps), np.arange(m), np.full(m, 1.0 / m)
    if n % m == 0:
        reps = n // m
        return np.arange(n), np.repeat(np.arange(m), reps), np.full(n, 1.0 / n)
    # breakpoints i/n and j/m in exact integer arithmetic on a common grid
    cuts = np.union1d(np.arange(1, n + 1) * m, np.arange(1, m + 1) * n)
    left = np.concatenate([[0], cuts[:-1]])
    w = (cuts - left) / (n * m)
    iy = left // m
    iz = left // n
    return iy, iz, w


def _transport_1d(y, z, p, with_plan):
    n, m = y.shape[0], z.shape[0]
    oy = np.argsort(y[:, 0], kind="stable")
    oz = np.argsort(z[:, 0], kind="stable")
    iy, iz, w = quantile_coupling(n, m)
    cost = float(np.sum(w * np.abs(y[oy[iy], 0] - z[oz[iz], 0]) ** p))
    diag = {"solver": "quantile"}
    if with_plan:
        plan = np.zeros((n, m))
        np.add.at(plan, (oy[iy], oz[iz]), w)
        diag["plan"] = plan
        if n == m:
            sigma = np.empty(n, dtype=np.int64)
            sigma[oy] = oz
            diag["assignment"] = sigma
    return DistanceResult(_root(cost, p), "exact", diag)


def exact_transport(y, z, metric: GroundMetric = EUCLIDEAN, with_plan: bool = True) -> DistanceResult:
    """Exact transport distance between two empirical distributions.

    Equal sizes are solved as a linear assignment problem; unequal sizes as
    the transportation linear program. Univariate Euclidean data use the
    monotone (quantile) coupling, which is optimal for every p >= 1.
    """
    y, z = _check_pair(y, z)
    n, m = y.shape[0], z.shape[0]
    if metric.kind == "euclidean" and y.shape[1] == 1:
        return _transport_1d(y, z, metric.p, with_plan)
    cost = metric.cost(y, z)
    if not np.all(np.isfinite(cost)):
        raise ValueError("non-finite ground distances")
    if n == m:
        rows, cols = linear_sum_assignment(cost)
        value = _root(float(cost[rows, cols].mean()), metric.p)
        diag = {"solver": "assignment"}
        if with_plan:
            sigma = np.empty(n, dtype=np.int64)
            sigma[rows] = cols
            plan = np.zeros((n, n))
            plan[rows, cols] = 1.0 / n
            diag.update(assignment=sigma, plan=plan)
        return DistanceResult(value, "exact", diag)
    # transportation LP: rows sum to 1/n, columns to 1/m
    a_rows = sparse.kron(sparse.identity(n), np.ones((1, m)))
    a_cols = sparse.kron(np.ones((1, n)), sparse.identity(m))
    res = linprog(
        cost.ravel(),
        A_eq=sparse.vstack([a_rows, a_cols], format="csc"),
        b_eq=np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)]),
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.clip(res.x.reshape(n, m), 0.0, None)
    diag = {"solver": "simplex", "iterations": int(res.nit)}
    if with_plan:
        diag["plan"] = plan
    return DistanceResult(_root(float(np.sum(plan * cost)), metric.p), "exact", diag)


def hilbert_sort(data, mapping: BoxMapping | None = None, bits: int = DEFAULT_BITS) -> np.ndarray:
    """Permutation listing the atoms of ``data`` in Hilbert-curve order."""
    perm, _ = hilbert_order(as_dataset(data), mapping, bits)
    return perm


def _hilbert_assignment(y, z, mapping, bits):
    if mapping is None:
        # shared box over both samples keeps the result symmetric
        mapping = BoxMapping.from_data(np.vstack([y, z]))
    oy, cy = hilbert_order(y, mapping, bits)
    oz, cz = hilbert_order(z, mapping, bits)
    sigma = np.empty(y.shape[0], dtype=np.int64)
    sigma[oy] = oz
    return sigma, cy + cz


def hilbert_distance(y, z, metric: GroundMetric = EUCLIDEAN, mapping: BoxMapping | None = None,
                     bits: int = DEFAULT_BITS) -> DistanceResult:
    """Transport cost of the assignment pairing the i-th atoms of both samples
    in Hilbert-curve order.

    ``mapping`` must be the same for every pair compared within one analysis;
    when omitted, a box around both samples is used.
    """
    y, z = _check_pair(y, z, same_size=True)
    sigma, clamped = _hilbert_assignment(y, z, mapping, bits)
    value = _assignment_value(y, z, sigma, metric)
    return DistanceResult(value, "hilbert", {"assignment": sigma, "clamped": clamped})


def swap_distance(y, z, metric: GroundMetric = EUCLIDEAN, init=None, max_sweeps: int = 1000,
                  mapping: BoxMapping | None = None, bits: int = DEFAULT_BITS) -> DistanceResult:
    """Refine an assignment by pairwise swaps until a sweep changes nothing.

    Starts from the Hilbert assignment unless ``init`` is given. Diagnostics
    hold the number of sweeps, swaps per sweep and the total cost after each
    sweep (``sweep_costs``, on the ``rho**p`` scale, summed over atoms).
    """
    y, z = _check_pair(y, z, same_size=True)
    diag = {}
    if init is None:
        sigma, diag["clamped"] = _hilbert_assignment(y, z, mapping, bits)
    else:
        sigma = np.asarray(init, dtype=np.int64).copy()
        if sorted(sigma.tolist()) != list(range(y.shape[0])):
            raise ValueError("init is not a permutation")
    cost = np.ascontiguousarray(metric.cost(y, z))
    start = float(cost[np.arange(len(sigma)), sigma].sum())
    sweeps, swaps, trace = _kernels.swap_sweeps(cost, sigma, max_sweeps)
    n = y.shape[0]
    value = _root(float(cost[np.arange(n), sigma].sum()) / n, metric.p)
    diag.update(assignment=sigma, sweeps=int(sweeps), swaps=swaps.tolist(),
                sweep_costs=[start] + trace.tolist())
    return DistanceResult(value, "swap", diag)


def sinkhorn_divergence(y, z, metric: GroundMetric = EUCLIDEAN, zeta: float = 0.1,
                        tol: float = 1e-6, max_iter: int = 10000) -> DistanceResult:
    """Transport cost of the entropy-regularized coupling (Sinkhorn scaling).

    Iterates until the L1 violation of the row marginals drops below ``tol``
    (columns are exact after each update). Works with the Gibbs kernel
    directly when ``exp(-cost/zeta)`` cannot underflow, and in the log
    domain otherwise. Non-convergence is reported in the diagnostics, not
    raised.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    y, z = _check_pair(y, z)
    n, m = y.shape[0], z.shape[0]
    cost = metric.cost(y, z)
    scaled = -cost / zeta
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    err = np.inf
    it = 0
    if scaled.min() > -700:
        K = np.exp(scaled)
        v = np.ones(m)
        Kv = K @ v
        while it < max_iter:
            u = a / Kv
            v = b / (K.T @ u)
            it += 1
            Kv = K @ v
            err = float(np.abs(u * Kv - a).sum())
            if err < tol:
                break
        plan = u[:, None] * K * v[None, :]
    else:
        log_a, log_b = np.log(a), np.log(b)
        f = np.zeros(n)
        g = np.zeros(m)
        row = logsumexp(scaled, axis=1)
        while it < max_iter:
            f = zeta * (log_a - row)
            g = zeta * (log_b - logsumexp(scaled + f[:, None] / zeta, axis=0))
            it += 1
            # row log-marginals of the current plan, reused by the next f update
            row = logsumexp(scaled + g[None, :] / zeta, axis=1)
            err = float(np.abs(np.exp(f / zeta + row) - a).sum())
            if err < tol:
                break
        plan = np.exp(scaled + (f[:, None] + g[None, :]) / zeta)
    value = _root(float(np.sum(plan * cost)), metric.p)
    return DistanceResult(value, "sinkhorn", {
        "iterations": it, "marginal_error": err, "converged": err < tol, "plan": plan,
    })


def _energy(y, z, ground: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    cross = ground(y, z).mean()
    within_y = ground(y, y).mean()
    within_z = ground(z, z).mean()
    return float(2.0 * cross - within_y - within_z)


def energy_distance(y, z, metric: GroundMetric = EUCLIDEAN) -> DistanceResult:
    """``2 E rho(Y, Z) - E rho(Y, Y') - E rho(Z, Z')`` over the empirical measures."""
    y, z = _check_pair(y, z)
    value = _energy(y, z, metric.pairwise)
    return DistanceResult(max(value, 0.0), "energy")


def median_bandwidth(data) -> float:
    """Median pairwise distance, the default MMD bandwidth."""
    data = as_dataset(data)
    if data.shape[0] < 2:
        return 1.0
    s = float(np.median(pdist(data)))
    return s if s > 0 else 1.0


def mmd(y, z, s: float | None = None, metric: GroundMetric = EUCLIDEAN) -> DistanceResult:
    """Energy distance under the Gaussian-kernel ground cost
    ``1 - exp(-rho^2 / (2 s^2))``. ``s`` defaults to the median pairwise
    distance of ``y``."""
    y, z = _check_pair(y, z)
    if s is None:
        s = median_bandwidth(y)
    if s <= 0:
        raise ValueError("bandwidth s must be positive")

    def ground(a, b):
        return -np.expm1(-metric.pairwise(a, b) ** 2 / (2.0 * s * s))

    value = _energy(y, z, ground)
    return DistanceResult(max(value, 0.0), "mmd", {"bandwidth": s})


def subsample_distance(y, z, m: int, inner: Callable[..., DistanceResult], rng) -> DistanceResult:
    """Apply ``inner`` to ``m`` atoms drawn without replacement from each sample."""
    y, z = _check_pair(y, z)
    if m < 1 or m > min(y.shape[0], z.shape[0]):
        raise ValueError(f"cannot sub-sample {m} atoms from sizes {y.shape[0]}, {z.shape[0]}")
    iy = rng.choice(y.shape[0], size=m, replace=False)
    iz = rng.choice(z.shape[0], size=m, replace=False)
    res = inner(y[iy], z[iz])
    res.diagnostics["subsample"] = m
    return res


METHODS = {
    "exact": exact_transport,
    "hilbert": hilbert_distance,
    "swap": swap_distance,
    "sinkhorn": sinkhorn_divergence,
    "energy": energy_distance,
    "mmd": mmd,
}
