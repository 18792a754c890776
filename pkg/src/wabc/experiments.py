"""Canned experiments at desk scale.

Each experiment simulates (or loads) observed data, runs one or more
samplers or estimators and writes analysis-ready CSV tables to an output
directory: particle traces, marginal quantiles per step and, where an
exact posterior exists, the W1 distance to it per step. Every default can
be overridden through keyword parameters.
"""
from __future__ import annotations

import math
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import io
from .discrepancy import DistanceSpec, NoiseModel, ResidualDistance, SummaryDistance, combine_distances
from .mewe import MEWEConfig, mewe_k_m_sweep, mewe_optimize
from .models import (AR1, BivariateGandK, CauchyData, Cosine, GammaData, LevySV, MG1Queue, NormalLocation,
                     ToggleSwitch, UnivariateNormal, acf_summary, normal_location_posterior)
from .reconstruct import ReconstructionConfig
from .smc import ParticleSystem, SMCConfig, SMCResult, cloud_w1, smc_run

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def quantile_table(result: SMCResult, names, label: str | None = None) -> list[dict]:
    rows = []
    for rec in result.trace:
        qs = np.quantile(rec.theta, QUANTILES, axis=0)
        for j, name in enumerate(names):
            row = {} if label is None else {"run": label}
            row.update(step=rec.step, epsilon=rec.epsilon, sim_count=rec.sim_count, parameter=name)
            row.update({f"q{int(q * 100):02d}": float(qs[i, j]) for i, q in enumerate(QUANTILES)})
            rows.append(row)
    return rows


def w1_table(result: SMCResult, reference, label: str | None = None) -> list[dict]:
    rows = []
    for rec in result.trace:
        row = {} if label is None else {"run": label}
        row.update(step=rec.step, epsilon=rec.epsilon, sim_count=rec.sim_count,
                   w1=cloud_w1(rec.theta, reference))
        rows.append(row)
    return rows


def _smc(model, prior, distance, n, p, seed, workers, initial=None, keep_data=False, budget=None):
    cfg = SMCConfig(model=model, prior=prior, distance=distance, n=n, n_particles=p["n_particles"],
                    alpha=p.get("alpha", 0.5), hits=p.get("hits", 2), budget=budget or p["budget"],
                    seed=seed, workers=workers, keep_data=keep_data)
    return smc_run(cfg, initial=initial)


def _write_run(out: Path, label: str, result: SMCResult, names):
    io.write_trace(out / f"{label}_trace.csv", result.trace, names)
    io.write_records(out / f"{label}_quantiles.csv", quantile_table(result, names))


def _seed(seed: int, *key) -> int:
    return int(np.random.SeedSequence([int(seed), *key]).generate_state(1)[0])


# ---------------------------------------------------------------- ABC


def normal_location(out, seed=0, workers=1, theta=(-0.59, 0.03), n=100, n_particles=512, budget=200_000,
                    methods=("wasserstein", "summary", "euclidean"), posterior_size=512):
    """Bivariate Normal location: WABC against summary and Euclidean ABC,
    tracked by W1 to an exact conjugate-posterior sample."""
    model = NormalLocation()
    y = model.simulate(np.asarray(theta, float), n, np.random.default_rng(_seed(seed, 1)))
    posterior = normal_location_posterior(y)
    reference = posterior.sample(np.random.default_rng(_seed(seed, 2)), posterior_size)
    io.write_dataset(out / "observed.csv", y)
    distances = {
        "wasserstein": lambda: DistanceSpec("exact").bind(y),
        "summary": lambda: SummaryDistance(y, lambda d: d.mean(axis=0)),
        "euclidean": lambda: DistanceSpec("euclidean").bind(y),
    }
    p = {"n_particles": n_particles, "budget": budget}
    w1_rows, results = [], {}
    for method in methods:
        res = _smc(model, model.default_prior(), distances[method](), n, p, seed, workers)
        _write_run(out, method, res, model.param_names)
        w1_rows += w1_table(res, reference, method)
        results[method] = res
    io.write_records(out / "w1_to_posterior.csv", w1_rows)
    return {"observed": y, "posterior_sample": reference, "results": results, "w1": w1_rows}


def gandk(out, seed=0, workers=1, n=500, n_particles=256, budget=100_000, method="hilbert"):
    """Bivariate g-and-k with a transport distance between the 2-D samples."""
    model = BivariateGandK()
    y = model.simulate(np.array(BivariateGandK.truth), n, np.random.default_rng(_seed(seed, 1)))
    io.write_dataset(out / "observed.csv", y)
    res = _smc(model, model.default_prior(), DistanceSpec(method).bind(y), n,
               {"n_particles": n_particles, "budget": budget}, seed, workers)
    _write_run(out, method, res, model.param_names)
    return {"observed": y, "results": {method: res}}


def toggle_switch(out, seed=0, workers=1, n=500, n_particles=256, budget=200_000, horizon=300):
    """Toggle switch with W1 between the univariate observation samples."""
    model = ToggleSwitch(horizon=horizon)
    truth = np.array([22.0, 12.0, 4.0, 4.5, 325.0, 0.25, 0.15])
    y = model.simulate(truth, n, np.random.default_rng(_seed(seed, 1)))
    io.write_dataset(out / "observed.csv", y)
    prior = model.default_prior()
    res = _smc(model, prior, DistanceSpec("exact").bind(y), n,
               {"n_particles": n_particles, "budget": budget}, seed, workers)
    _write_run(out, "wasserstein", res, model.param_names)
    return {"observed": y, "truth": truth, "prior": prior, "results": {"wasserstein": res}}


def mg1(out, seed=0, workers=1, n=50, n_particles=256, budget=500_000, theta=(4.0, 7.0, 0.15),
        constrain=True):
    """M/G/1 queue from the marginal law of inter-departure times; optionally
    restricts the first parameter to lie below the smallest observation."""
    model = MG1Queue()
    y = model.simulate(np.asarray(theta, float), n, np.random.default_rng(_seed(seed, 1)))
    io.write_dataset(out / "observed.csv", y)
    prior = model.default_prior(float(y.min()) if constrain else None)
    res = _smc(model, prior, DistanceSpec("exact").bind(y), n,
               {"n_particles": n_particles, "budget": budget}, seed, workers)
    _write_run(out, "wasserstein", res, model.param_names)
    return {"observed": y, "prior": prior, "results": {"wasserstein": res}}


def ar1(out, seed=0, workers=1, n=1000, n_particles=256, budget=200_000, theta=(0.7, 0.9),
        lag_method="hilbert"):
    """AR(1): marginal W1 (ridge of equal stationary variance) against W1
    between lag-1 delay reconstructions subsampled to every other pair."""
    model = AR1()
    y = model.simulate(np.asarray(theta, float), n, np.random.default_rng(_seed(seed, 1)))
    io.write_dataset(out / "observed.csv", y)
    prior = model.default_prior()
    p = {"n_particles": n_particles, "budget": budget}
    marginal = _smc(model, prior, DistanceSpec("exact").bind(y), n, p, seed, workers)
    lagged_spec = DistanceSpec(lag_method, reconstruction=ReconstructionConfig((1,), 2))
    lagged = _smc(model, prior, lagged_spec.bind(y), n, p, seed, workers)
    _write_run(out, "marginal", marginal, model.param_names)
    _write_run(out, "lag1", lagged, model.param_names)
    return {"observed": y, "prior": prior, "results": {"marginal": marginal, "lag1": lagged}}


def cosine(out, seed=0, workers=1, n=100, n_particles=256, budget=100_000,
           methods=("euclidean", "curve", "residual"), aspect=(1.0, 1.0)):
    """Cosine signal plus noise: Euclidean vector distance, curve matching
    and residual reconstruction."""
    model = Cosine()
    truth = np.array([1 / 80, math.pi / 4, 0.0, math.log(2.0)])
    y = model.simulate(truth, n, np.random.default_rng(_seed(seed, 1)))
    io.write_dataset(out / "observed.csv", y)
    prior = model.default_prior()
    p = {"n_particles": n_particles, "budget": budget}
    results = {}
    for method in methods:
        sim_model = model
        if method == "euclidean":
            dist = DistanceSpec("euclidean").bind(y)
        elif method == "curve":
            dist = DistanceSpec("exact", curve=True, aspect=tuple(aspect)).bind(y)
        elif method == "residual":
            dist = ResidualDistance(model, y)
            sim_model = NoiseModel(model, dist.size)
        else:
            raise ValueError(f"unknown cosine method {method!r}")
        results[method] = _smc(sim_model, prior, dist, n, p, seed, workers)
        _write_run(out, method, results[method], model.param_names)
    return {"observed": y, "truth": truth, "results": results}


def levy_sv(out, seed=0, workers=1, n=2000, n_particles=256, budget=100_000, extra_budget=200_000,
            theta=(0.0, 0.0, 0.5, 0.0625, 0.01), acf_lags=50):
    """Levy-driven stochastic volatility in two stages.

    Stage one uses the Hilbert distance between lag-1 reconstructions.
    Stage two starts from its particles and uses the autocorrelation summary
    gated by the stage-one final threshold.
    """
    model = LevySV()
    y = model.simulate(np.asarray(theta, float), n, np.random.default_rng(_seed(seed, 1)))
    io.write_dataset(out / "observed.csv", y)
    prior = model.default_prior()
    p = {"n_particles": n_particles, "budget": budget}
    primary = DistanceSpec("hilbert", reconstruction=ReconstructionConfig((1,))).bind(y)
    stage1 = _smc(model, prior, primary, n, p, seed, workers, keep_data=True)
    eps_h = stage1.system.epsilon
    combined = combine_distances(primary, eps_h, lambda s: acf_summary(s, acf_lags))
    sys1 = stage1.system
    # rescore the stage-one particles on their stored data sets; no new simulations
    start = ParticleSystem(sys1.theta.copy(), np.array([combined(z) if z is not None else np.inf
                                                        for z in sys1.data]),
                           sys1.log_prior.copy(), np.inf, sys1.sim_count, sys1.step, None)
    stage2 = _smc(model, prior, combined, n, p, _seed(seed, 2), workers, initial=start,
                  budget=sys1.sim_count + extra_budget)
    _write_run(out, "stage1", stage1, model.param_names)
    _write_run(out, "stage2", stage2, model.param_names)
    summaries = [{"particle_index": i, **dict(zip(model.param_names, map(float, sys1.theta[i]))),
                  "summary": acf_summary(z, acf_lags) if z is not None else float("nan")}
                 for i, z in enumerate(sys1.data)]
    io.write_records(out / "stage1_summaries.csv", summaries)
    return {"observed": y, "prior": prior, "eps_h": eps_h,
            "observed_summary": combined.observed_summary,
            "results": {"stage1": stage1, "stage2": stage2}}


# ---------------------------------------------------------------- point estimation


def _normal_start(data):
    return np.array([float(np.mean(data)), float(np.std(data))])


def gamma_normal(out, seed=0, workers=1, n=100, shape=10.0, rate=5.0,
                 grid=((1, 100), (20, 100), (1000, 100), (1, 10_000), (20, 10_000), (1000, 10_000)),
                 repeats=50, reference_m=1_000_000, reference_k=1, restarts=1):
    """Normal model fitted to Gamma data: estimator spread over a (k, m) grid
    and a large-m reference estimate."""
    y = GammaData().simulate(np.array([shape, rate]), n, np.random.default_rng(_seed(seed, 1)))
    io.write_dataset(out / "observed.csv", y)
    model = UnivariateNormal()
    start = _normal_start(y)
    template = MEWEConfig(restarts=restarts, start=start, workers=workers)
    rows = mewe_k_m_sweep(y, model, [tuple(c) for c in grid], repeats, _seed(seed, 2), template)
    io.write_records(out / "km_sweep.csv", rows)
    ref = mewe_optimize(y, model, MEWEConfig(k=reference_k, m=reference_m, restarts=restarts, start=start,
                                             seed=_seed(seed, 3)))
    io.write_records(out / "reference.csv", ref.table(list(model.param_names)))
    summary = []
    for k, m in grid:
        cell = np.array([[r["mu"], r["sigma"]] for r in rows if r["k"] == k and r["m"] == m])
        q75, q25 = np.quantile(cell, [0.75, 0.25], axis=0)
        summary.append({"k": k, "m": m, "mean_mu": cell[:, 0].mean(), "mean_sigma": cell[:, 1].mean(),
                        "iqr_mu": q75[0] - q25[0], "iqr_sigma": q75[1] - q25[1],
                        "dist_to_reference": float(np.linalg.norm(cell.mean(axis=0) - ref.theta))})
    io.write_records(out / "km_summary.csv", summary)
    return {"observed": y, "rows": rows, "reference": ref, "summary": summary}


def cauchy_normal(out, seed=0, workers=1, n=10_000, m=10_000, k=20, repeats=20, restarts=1):
    """Normal model fitted to standard Cauchy data, one fresh data set per repeat."""
    model = UnivariateNormal()
    rows = []
    for rep in range(repeats):
        y = CauchyData().simulate(np.array([0.0, 1.0]), n, np.random.default_rng(_seed(seed, 1, rep)))
        med = float(np.median(y))
        iqr = float(np.subtract(*np.quantile(y, [0.75, 0.25])))
        cfg = MEWEConfig(k=k, m=m, restarts=restarts, start=np.array([med, iqr / 1.349]),
                         seed=_seed(seed, 2, rep), workers=workers)
        res = mewe_optimize(y, model, cfg)
        rows.append({"repeat": rep, "mu": float(res.theta[0]), "sigma": float(res.theta[1]),
                     "objective": res.objective, "evaluations": res.evaluations, "converged": res.converged})
    io.write_records(out / "estimates.csv", rows)
    return {"rows": rows}


EXPERIMENTS: dict[str, Callable] = {
    "normal-location": normal_location,
    "gandk": gandk,
    "toggle-switch": toggle_switch,
    "mg1": mg1,
    "ar1": ar1,
    "cosine": cosine,
    "levy-sv": levy_sv,
    "gamma-normal": gamma_normal,
    "cauchy-normal": cauchy_normal,
}


def run_experiment(name: str, out, seed: int = 0, workers: int = 1, **params) -> dict:
    """Run a canned experiment, writing its tables under ``out``."""
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = fn(out, seed=seed, workers=workers, **params)
    result["elapsed"] = time.perf_counter() - t0
    return result


# ---------------------------------------------------------------- timing

TIMED_METHODS = ("hilbert", "swap", "mmd", "energy", "sinkhorn", "exact")


def timing_table(sizes=(500,), d: int = 2, repetitions: int = 10, methods=TIMED_METHODS, seed: int = 0,
                 sampler=None) -> list[dict]:
    """Mean and standard deviation of wall time per distance evaluation.

    Each repetition draws a fresh pair of samples (standard Normal unless
    ``sampler(rng, n, d)`` is given) and times every method on it.
    """
    from . import distances as D

    fns = {
        "exact": lambda y, z: D.exact_transport(y, z, with_plan=False),
        "hilbert": D.hilbert_distance,
        "swap": D.swap_distance,
        "sinkhorn": D.sinkhorn_divergence,
        "energy": D.energy_distance,
        "mmd": D.mmd,
    }
    unknown = set(methods) - set(fns)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    sampler = sampler or (lambda r, n, dim: r.standard_normal((n, dim)))
    # compile and warm caches outside the timed region
    y0 = sampler(rng, 8, d)
    for m in methods:
        fns[m](y0, sampler(rng, 8, d))
    rows = []
    for n in sizes:
        times = {m: [] for m in methods}
        for _ in range(repetitions):
            y, z = sampler(rng, n, d), sampler(rng, n, d)
            for m in methods:
                t0 = time.perf_counter()
                fns[m](y, z)
                times[m].append(time.perf_counter() - t0)
        for m in methods:
            t = np.array(times[m])
            rows.append({"method": m, "n": int(n), "d": int(d), "repetitions": repetitions,
                         "mean_seconds": float(t.mean()),
                         "sd_seconds": float(t.std(ddof=1)) if t.size > 1 else 0.0})
    return rows
