"""Rejection ABC and an adaptive-threshold SMC sampler with r-hit moves."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .distances import exact_transport
from .models import SimulationError
from .priors import Prior

MOVE_CAP = 10_000


def _evaluate(model, distance, theta, n, rng, keep=False, threshold=None):
    """Simulate once at ``theta`` and return (distance, data).

    ``threshold`` lets a screening distance skip the exact computation for
    clear misses; only comparisons against it are then meaningful.
    """
    try:
        z = model.simulate(theta, n, rng)
    except SimulationError:
        return np.inf, None
    if getattr(distance, "needs_theta", False):
        d = float(distance(z, theta))
    elif threshold is not None and getattr(distance, "screens", False):
        d = float(distance(z, threshold))
    else:
        d = float(distance(z))
    if not d >= 0:  # nan counts as a miss
        d = np.inf
    return d, (z if keep else None)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


# ---------------------------------------------------------------- rejection


@dataclass
class RejectionResult:
    theta: np.ndarray
    distance: np.ndarray
    simulations: int

    @property
    def acceptance_rate(self) -> float:
        return self.theta.shape[0] / self.simulations


def rejection_abc(prior: Prior, model, distance, epsilon: float, budget: int, n: int, rng) -> RejectionResult:
    """Draw from the prior, simulate, keep draws whose distance is at most ``epsilon``.

    Runs exactly ``budget`` simulations. Returns all accepted draws; an empty
    set when none is accepted.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    theta = prior.sample(rng, budget)
    dist = np.empty(budget)
    for i in range(budget):
        if model.valid(theta[i]):
            dist[i] = _evaluate(model, distance, theta[i], n, rng, threshold=epsilon)[0]
        else:
            dist[i] = np.inf
    keep = dist <= epsilon
    return RejectionResult(theta[keep], dist[keep], budget)


# ---------------------------------------------------------------- particles


@dataclass
class ParticleSystem:
    theta: np.ndarray
    distance: np.ndarray
    log_prior: np.ndarray
    epsilon: float = np.inf
    sim_count: int = 0
    step: int = 0
    data: list | None = None

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(self.theta.copy(), self.distance.copy(), self.log_prior.copy(),
                              self.epsilon, self.sim_count, self.step,
                              None if self.data is None else list(self.data))

    def n_unique(self, mask=None) -> int:
        theta = self.theta if mask is None else self.theta[mask]
        return int(np.unique(theta, axis=0).shape[0]) if theta.shape[0] else 0


@dataclass
class SMCConfig:
    """Settings for :func:`smc_run`.

    ``distance`` is a callable on synthetic data (for instance a bound
    :class:`~wabc.discrepancy.DistanceSpec`). ``n`` is the simulated
    sample size. When ``target_epsilon`` is set the threshold never goes
    below it, and the run stops ``steps_at_target`` moves after reaching it.
    """

    model: object
    prior: Prior
    distance: Callable
    n: int
    n_particles: int = 256
    alpha: float = 0.5
    hits: int = 2
    components: int = 5
    budget: int = 100_000
    seed: int = 0
    kernel: str = "rhit"
    move_cap: int = MOVE_CAP
    target_epsilon: float | None = None
    steps_at_target: int = 3
    max_stalls: int = 3
    keep_data: bool = False
    workers: int = 1

    def validate(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.hits < 1:
            raise ValueError("hits must be >= 1")
        if self.kernel == "rhit" and self.hits < 2:
            raise ValueError("the r-hit kernel needs hits >= 2")
        if self.kernel not in ("rhit", "onehit"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.budget < self.n_particles:
            raise ValueError("budget must be at least the number of particles")
        if self.components < 1:
            raise ValueError("components must be >= 1")
        return self


def smc_init(config: SMCConfig) -> ParticleSystem:
    """Draw N particles from the prior, one simulation each; threshold +inf."""
    config.validate()
    rng = _stream(config.seed, 0)
    N = config.n_particles
    theta = config.prior.sample(rng, N)
    log_prior = np.asarray(config.prior.logpdf(theta), dtype=float)
    if not np.all(np.isfinite(log_prior)):
        raise ValueError("prior sampling produced out-of-support draws")
    dist = np.empty(N)
    data = [None] * N if config.keep_data else None
    for i in range(N):
        prng = _stream(config.seed, 0, i)
        d, z = _evaluate(config.model, config.distance, theta[i], config.n, prng, config.keep_data)
        dist[i] = d
        if data is not None:
            data[i] = z
    return ParticleSystem(theta, dist, log_prior, np.inf, N, 0, data)


def adapt_threshold(system: ParticleSystem, alpha: float) -> tuple[float, bool]:
    """Smallest current distance keeping at least ceil(alpha N) unique particles.

    Returns ``(epsilon, stalled)``; ``stalled`` is True when no strict
    decrease below the previous threshold is possible, in which case the
    previous threshold is returned.
    """
    need = math.ceil(alpha * system.size)
    prev = system.epsilon
    order = np.argsort(system.distance, kind="stable")
    seen = set()
    for rank, i in enumerate(order):
        d = system.distance[i]
        if not np.isfinite(d):
            break
        seen.add(system.theta[i].tobytes())
        # only cut between distinct distance values
        if rank + 1 < system.size and system.distance[order[rank + 1]] == d:
            continue
        if len(seen) >= need:
            if d < prev:
                return float(d), False
            break
    return float(prev), True


def resample(system: ParticleSystem, epsilon: float, rng) -> ParticleSystem:
    """Multinomial resampling with equal weights over particles within ``epsilon``."""
    survivors = np.flatnonzero(system.distance <= epsilon)
    if survivors.size == 0:
        raise ValueError("no particle within the threshold")
    pick = survivors[rng.integers(0, survivors.size, system.size)]
    data = None if system.data is None else [system.data[i] for i in pick]
    return ParticleSystem(system.theta[pick].copy(), system.distance[pick].copy(),
                          system.log_prior[pick].copy(), float(epsilon), system.sim_count,
                          system.step, data)


# ---------------------------------------------------------------- proposal


class MixtureProposal:
    """Gaussian mixture with a sampler and a vectorized log-density."""

    def __init__(self, weights, means, covs):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.covs = np.asarray(covs, dtype=float).reshape(len(self.weights), self.means.shape[1], -1)
        self.chols = np.linalg.cholesky(self.covs)
        self.log_dets = 2 * np.log(np.diagonal(self.chols, axis1=1, axis2=2)).sum(axis=1)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        d = self.dim
        out = np.empty((x.shape[0], len(self.weights)))
        for k in range(len(self.weights)):
            sol = np.linalg.solve(self.chols[k], (x - self.means[k]).T)
            out[:, k] = -0.5 * (np.sum(sol**2, axis=0) + self.log_dets[k] + d * math.log(2 * math.pi))
        return out

    def logpdf(self, x):
        single = np.ndim(x) == 1
        lp = logsumexp(self.component_logpdf(x) + np.log(self.weights), axis=1)
        return float(lp[0]) if single else lp

    def sample(self, rng, size=None):
        m = 1 if size is None else size
        k = rng.choice(len(self.weights), size=m, p=self.weights)
        eps = rng.standard_normal((m, self.dim))
        x = self.means[k] + np.einsum("nij,nj->ni", self.chols[k], eps)
        return x[0] if size is None else x


def fit_proposal(theta, rng, components: int = 5, em_iterations: int = 10) -> MixtureProposal:
    """Fit a Gaussian mixture to the unique rows of ``theta``.

    k-means initialization then a fixed number of EM iterations; each
    covariance gets ``1e-6 * trace / d`` of the pooled covariance added to
    its diagonal. Fewer unique rows than ``components`` gives one component.
    """
    X = np.unique(np.atleast_2d(np.asarray(theta, dtype=float)), axis=0)
    n, d = X.shape
    pooled = np.atleast_2d(np.cov(X, rowvar=False)) if n > 1 else np.zeros((d, d))
    reg = 1e-6 * np.trace(pooled) / d
    if not reg > 0:
        reg = 1e-12 * max(1.0, float(np.mean(X**2)))
    ridge = reg * np.eye(d)
    K = components if n >= components else 1
    if K == 1:
        return MixtureProposal([1.0], X.mean(axis=0, keepdims=True), (pooled + ridge)[None])

    scale = np.sqrt(np.diag(pooled))
    scale[scale == 0] = 1.0
    _, labels = kmeans2(X / scale, K, minit="++", seed=rng)
    resp = np.zeros((n, K))
    resp[np.arange(n), labels] = 1.0
    weights = means = covs = None
    for it in range(em_iterations + 1):
        nk = resp.sum(axis=0)
        live = nk > 1e-10
        resp, nk = resp[:, live], nk[live]
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        covs = np.empty((len(nk), d, d))
        for k in range(len(nk)):
            diff = X - means[k]
            covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k] + ridge
        if it == em_iterations:
            break
        mix = MixtureProposal(weights, means, covs)
        log_r = mix.component_logpdf(X) + np.log(weights)
        resp = np.exp(log_r - logsumexp(log_r, axis=1, keepdims=True))
    return MixtureProposal(weights, means, covs)


# ---------------------------------------------------------------- moves


@dataclass
class MoveResult:
    theta: np.ndarray
    distance: float
    log_prior: float
    simulations: int
    accepted: bool
    capped: bool = False
    data: object = None


def rhit_move(theta, distance_value, log_prior, q: MixtureProposal, epsilon, r, model, distance,
              n, prior, rng, cap: int = MOVE_CAP, keep_data=False, data=None) -> MoveResult:
    """One r-hit ABC-MCMC move.

    The kernel simulates at the proposal until ``r`` hits (``T*`` draws)
    and at the current point until ``r-1`` hits (``T`` draws), then accepts
    with probability ``min(1, pi(t*) q(t) T / (pi(t) q(t*) (T*-1)))``. A
    hit is a finite distance at most ``epsilon``.

    The uniform is drawn up front and simulations alternate between the
    two points, so the run stops as soon as the outcome is settled: once
    the proposal has its hits, a large enough partial ``T`` already
    guarantees acceptance; once the current point has its hits, a large
    enough partial ``T*`` already guarantees rejection. The decision is the
    same as with both loops run to completion. Moves reaching ``cap``
    simulations are rejected.
    """
    stay = MoveResult(theta, distance_value, log_prior, 0, False, False, data)
    prop = q.sample(rng)
    lp_prop = float(prior.logpdf(prop))
    if not np.isfinite(lp_prop) or not model.valid(prop):
        return stay
    # accept iff (T* - 1) * u < R * T
    log_R = lp_prop + q.logpdf(theta) - log_prior - q.logpdf(prop)
    log_u = math.log(rng.uniform())
    hits = []
    t_star = t_cur = got = 0
    while True:
        prop_done = len(hits) >= r
        cur_done = got >= r - 1
        if prop_done and cur_done:
            accept = log_u + math.log(t_star - 1) < log_R + math.log(t_cur)
            break
        if prop_done and t_cur > 0 and log_u + math.log(t_star - 1) < log_R + math.log(t_cur):
            accept = True
            break
        if cur_done and t_star > 1 and log_u + math.log(t_star - 1) >= log_R + math.log(t_cur):
            accept = False
            break
        if t_star + t_cur >= cap:
            stay.simulations, stay.capped = t_star + t_cur, True
            return stay
        if not prop_done:
            d, z = _evaluate(model, distance, prop, n, rng, keep_data, epsilon)
            t_star += 1
            if d <= epsilon:
                hits.append((d, z))
        if not cur_done and t_star + t_cur < cap:
            d, _ = _evaluate(model, distance, theta, n, rng, threshold=epsilon)
            t_cur += 1
            if d <= epsilon:
                got += 1
    used = t_star + t_cur
    if accept:
        d, z = hits[rng.integers(len(hits))]
        return MoveResult(prop, d, lp_prop, used, True, False, z)
    stay.simulations = used
    return stay


def onehit_move(theta, distance_value, log_prior, q: MixtureProposal, epsilon, model, distance,
                n, prior, rng, cap: int = MOVE_CAP, keep_data=False, data=None) -> MoveResult:
    """One-hit ABC-MCMC move.

    After a prior/proposal ratio check, simulates at the proposal and the
    current point in alternation until one of them hits; accepts when the
    proposal hits first (ties go to the proposal).
    """
    stay = MoveResult(theta, distance_value, log_prior, 0, False, False, data)
    prop = q.sample(rng)
    lp_prop = float(prior.logpdf(prop))
    if not np.isfinite(lp_prop) or not model.valid(prop):
        return stay
    log_ratio = lp_prop + q.logpdf(theta) - log_prior - q.logpdf(prop)
    if math.log(rng.uniform()) >= log_ratio:
        return stay
    used = 0
    while used + 2 <= cap:
        d_prop, z = _evaluate(model, distance, prop, n, rng, keep_data, epsilon)
        d_cur, _ = _evaluate(model, distance, theta, n, rng, threshold=epsilon)
        used += 2
        if d_prop <= epsilon:
            return MoveResult(prop, d_prop, lp_prop, used, True, False, z)
        if d_cur <= epsilon:
            stay.simulations = used
            return stay
    stay.simulations, stay.capped = used, True
    return stay


# ---------------------------------------------------------------- driver


@dataclass
class StepRecord:
    step: int
    epsilon: float
    sim_count: int
    theta: np.ndarray
    distance: np.ndarray
    acceptance: float = float("nan")
    capped: int = 0
    unique: int = 0
    stalled: bool = False


@dataclass
class SMCResult:
    trace: list[StepRecord]
    system: ParticleSystem
    stalled: bool = False
    stop_reason: str = "budget"
    config: SMCConfig | None = field(default=None, repr=False)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([s.epsilon for s in self.trace])

    @property
    def theta(self) -> np.ndarray:
        return self.system.theta


def _record(system: ParticleSystem, acceptance=float("nan"), capped=0, stalled=False) -> StepRecord:
    return StepRecord(system.step, system.epsilon, system.sim_count, system.theta.copy(),
                      system.distance.copy(), acceptance, capped, system.n_unique(), stalled)


def _move_all(system: ParticleSystem, q, config: SMCConfig, epsilon: float, step: int, pool) -> list[MoveResult]:
    def one(i):
        rng = _stream(config.seed, step, i)
        data = None if system.data is None else system.data[i]
        args = (system.theta[i], system.distance[i], system.log_prior[i], q, epsilon)
        if config.kernel == "rhit":
            return rhit_move(*args, config.hits, config.model, config.distance, config.n, config.prior,
                             rng, config.move_cap, config.keep_data, data)
        return onehit_move(*args, config.model, config.distance, config.n, config.prior,
                           rng, config.move_cap, config.keep_data, data)

    idx = range(system.size)
    if pool is None:
        return [one(i) for i in idx]
    return list(pool.map(one, idx))


def smc_step(system: ParticleSystem, config: SMCConfig, pool=None) -> tuple[ParticleSystem, StepRecord]:
    """adapt -> resample -> move; returns the new system and its trace record."""
    step = system.step + 1
    eps, stalled = adapt_threshold(system, config.alpha)
    if config.target_epsilon is not None and eps < config.target_epsilon:
        eps, stalled = max(float(config.target_epsilon), eps), False
    rng = _stream(config.seed, step)
    system = resample(system, eps, rng)
    system.step = step
    q = fit_proposal(system.theta, rng, config.components)
    moves = _move_all(system, q, config, eps, step, pool)
    for i, m in enumerate(moves):
        system.theta[i] = m.theta
        system.distance[i] = m.distance
        system.log_prior[i] = m.log_prior
        if system.data is not None:
            system.data[i] = m.data
    system.sim_count += sum(m.simulations for m in moves)
    acc = float(np.mean([m.accepted for m in moves]))
    capped = sum(m.capped for m in moves)
    return system, _record(system, acc, capped, stalled)


def smc_run(config: SMCConfig, initial: ParticleSystem | None = None,
            callback: Callable[[StepRecord], None] | None = None) -> SMCResult:
    """Adaptive SMC: repeat adapt -> resample -> move until the budget is spent.

    A stalled step (threshold could not decrease) still rejuvenates the
    particles at the unchanged threshold; the run stops after
    ``max_stalls`` consecutive stalls.
    """
    config.validate()
    system = initial.copy() if initial is not None else smc_init(config)
    trace = [_record(system)]
    if callback:
        callback(trace[-1])
    stalls = 0
    at_target = 0
    reason = "budget"
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        while system.sim_count < config.budget:
            system, rec = smc_step(system, config, pool)
            trace.append(rec)
            if callback:
                callback(rec)
            stalls = stalls + 1 if rec.stalled else 0
            if stalls >= config.max_stalls:
                reason = "stall"
                break
            if config.target_epsilon is not None and system.epsilon <= config.target_epsilon:
                at_target += 1
                if at_target >= config.steps_at_target:
                    reason = "target"
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return SMCResult(trace, system, reason == "stall", reason, config)


def cloud_w1(sample_a, sample_b) -> float:
    """Exact W1 between two parameter clouds."""
    return exact_transport(sample_a, sample_b, with_plan=False).value
