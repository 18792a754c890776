"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the slow runs are
marked ``slow`` and can be deselected with ``-m "not slow"``.
"""
import time

import numpy as np
import pytest

from oracles import brute_force_wp
from wabc.discrepancy import DistanceSpec
from wabc.distances import GroundMetric, exact_transport, hilbert_distance, swap_distance, wasserstein_1d
from wabc.experiments import run_experiment, timing_table
from wabc.models import NormalLocation
from wabc.smc import SMCConfig, cloud_w1, rejection_abc, smc_run


def report(log, number, ok, detail, elapsed, limit=None):
    in_time = limit is None or elapsed < limit
    status = "PASS" if ok and in_time else "FAIL"
    bound = "" if limit is None else f" (limit {limit:.0f}s)"
    line = f"criterion {number:>2}: {status}  {detail}; runtime {elapsed:.1f}s{bound}"
    log.append(line)
    print(line, flush=True)
    assert ok, line
    assert in_time, line


def iqr(a, axis=0):
    q75, q25 = np.quantile(a, [0.75, 0.25], axis=axis)
    return q75 - q25


def test_criterion_01_exact_solver_oracle(acceptance_log):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n, d, p = rng.integers(2, 8), rng.integers(1, 4), rng.choice([1, 2])
        y, z = rng.standard_normal((n, d)), rng.standard_normal((n, d))
        got = exact_transport(y, z, GroundMetric(p=p), with_plan=False).value
        worst = max(worst, abs(got - brute_force_wp(y, z, p)))
    report(acceptance_log, 1, worst <= 1e-9, f"max |exact - enumeration| = {worst:.2e} over 200 pairs",
           time.perf_counter() - t0, 10)


def test_criterion_02_sandwich(acceptance_log):
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    order_bad = sweep_bad = 0
    for i in range(200):
        n, d = (50, 200)[i % 2], (2, 5)[(i // 2) % 2]
        y, z = rng.standard_normal((n, d)), rng.standard_normal((n, d)) + rng.uniform(0, 1)
        ex = exact_transport(y, z, with_plan=False).value
        sw = swap_distance(y, z)
        hi = hilbert_distance(y, z).value
        order_bad += not (ex <= sw.value + 1e-9 and sw.value <= hi + 1e-9)
        sweep_bad += bool(np.any(np.diff(sw.diagnostics["sweep_costs"]) > 1e-9))
    report(acceptance_log, 2, order_bad == 0 and sweep_bad == 0,
           f"{order_bad} order violations, {sweep_bad} increasing sweep traces over 200 pairs",
           time.perf_counter() - t0, 60)


def test_criterion_03_one_dimensional_collapse(acceptance_log):
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = rng.integers(1, 200)
        y, z = rng.standard_normal((n, 1)), rng.standard_t(3, (n, 1))
        vals = [wasserstein_1d(y, z).value, exact_transport(y, z, with_plan=False).value,
                hilbert_distance(y, z).value, swap_distance(y, z).value]
        worst = max(worst, max(vals) - min(vals))
    report(acceptance_log, 3, worst <= 1e-9, f"max spread across four methods = {worst:.2e}",
           time.perf_counter() - t0, 5)


@pytest.mark.slow
def test_criterion_04_normal_location_posterior(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    res = run_experiment("normal-location", tmp_path, seed=0, methods=("wasserstein",))
    w1 = [row["w1"] for row in res["w1"]]
    factor = w1[0] / w1[-1]
    last = np.diff(w1[-5:])
    violations = int(np.sum(last > 0))
    ok = factor >= 10 and violations <= 1
    report(acceptance_log, 4, ok, f"prior/final W1 = {w1[0]:.3f}/{w1[-1]:.4f} (factor {factor:.0f}), "
           f"{violations} increase(s) over the last 5 steps", time.perf_counter() - t0, 300)


@pytest.mark.slow
def test_criterion_05_smc_against_rejection(acceptance_log):
    t0 = time.perf_counter()
    model = NormalLocation()
    prior = model.default_prior()
    n = 100
    y = model.simulate(np.array([-0.59, 0.03]), n, np.random.default_rng(105))
    dist = DistanceSpec("exact").bind(y)
    # shared threshold: a low quantile of prior-predictive distances, so that
    # rejection keeps several hundred draws from its budget
    pilot = rejection_abc(prior, model, dist, np.inf, 4000, n, np.random.default_rng(1))
    eps = float(np.quantile(pilot.distance, 0.015))
    rej_a = rejection_abc(prior, model, dist, eps, 40_000, n, np.random.default_rng(2)).theta
    rej_b = rejection_abc(prior, model, dist, eps, 40_000, n, np.random.default_rng(3)).theta
    smc = smc_run(SMCConfig(model=model, prior=prior, distance=dist, n=n, n_particles=512, budget=200_000,
                            target_epsilon=eps, seed=4))
    between = cloud_w1(rej_a, rej_b)
    against = cloud_w1(smc.theta, rej_a)
    ok = smc.system.epsilon <= eps and against <= 1.5 * between
    report(acceptance_log, 5, ok, f"eps {eps:.3f}, accepted {len(rej_a)}/{len(rej_b)}; W1(smc, rej A) = "
           f"{against:.4f}, W1(rej A, rej B) = {between:.4f}, ratio {against / between:.2f}",
           time.perf_counter() - t0, 300)


@pytest.mark.slow
def test_criterion_06_ar1_ridge(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    res = run_experiment("ar1", tmp_path, seed=0)

    def stationary_cv(theta):
        var = np.exp(2 * theta[:, 1]) / (1 - theta[:, 0] ** 2)
        return var.std() / var.mean()

    marginal, lag1 = res["results"]["marginal"], res["results"]["lag1"]
    ratio = stationary_cv(marginal.theta) / stationary_cv(marginal.trace[0].theta)
    phi, log_sigma = lag1.theta.mean(axis=0)
    ok = ratio <= 0.2 and abs(phi - 0.7) <= 0.15 and abs(log_sigma - 0.9) <= 0.15
    report(acceptance_log, 6, ok, f"variance CV ratio {ratio:.3f}; lag-1 means phi {phi:.3f}, "
           f"log sigma {log_sigma:.3f}", time.perf_counter() - t0, 600)


@pytest.mark.slow
def test_criterion_07_cauchy_normal(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    rows = run_experiment("cauchy-normal", tmp_path, seed=0)["rows"]
    mu = np.median([abs(r["mu"]) for r in rows])
    sigma = np.median([r["sigma"] for r in rows])
    ok = len(rows) == 20 and mu <= 0.1 and 1.9 <= sigma <= 2.6
    report(acceptance_log, 7, ok, f"median |mu| {mu:.4f}, median sigma {sigma:.3f} over {len(rows)} repeats",
           time.perf_counter() - t0, 600)


@pytest.mark.slow
def test_criterion_08_mewe_k_m_sweep(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    res = run_experiment("gamma-normal", tmp_path, seed=0)
    cells = {(s["k"], s["m"]): s for s in res["summary"]}
    problems = []
    for m in (100, 10_000):
        for key in ("iqr_mu", "iqr_sigma"):
            seq = [cells[(k, m)][key] for k in (1, 20, 1000)]
            if not all(a > b for a, b in zip(seq, seq[1:])):
                problems.append(f"{key} at m={m}: {np.round(seq, 4).tolist()}")
    for k in (1, 20, 1000):
        near, far = cells[(k, 10_000)]["dist_to_reference"], cells[(k, 100)]["dist_to_reference"]
        if not near < far:
            problems.append(f"k={k}: m=1e4 distance {near:.4f} not below m=1e2 distance {far:.4f}")
    detail = "; ".join(problems) or "IQR decreasing in k at both m; m=1e4 means closer to reference for all k"
    report(acceptance_log, 8, not problems, detail, time.perf_counter() - t0, 900)


@pytest.mark.slow
def test_criterion_09_mg1(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    res = run_experiment("mg1", tmp_path, seed=0)
    y_min = float(res["observed"].min())
    t1, t2, t3 = res["results"]["wasserstein"].theta.mean(axis=0)
    ok = 3.2 <= t1 <= y_min and 5.5 <= t2 <= 8.5 and 0.08 <= t3 <= 0.25
    report(acceptance_log, 9, ok, f"posterior means ({t1:.3f}, {t2:.3f}, {t3:.3f}), min y {y_min:.3f}",
           time.perf_counter() - t0, 600)


@pytest.mark.slow
def test_criterion_10_toggle_switch(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    res = run_experiment("toggle-switch", tmp_path, seed=0)
    theta = res["results"]["wasserstein"].theta
    prior_iqr = iqr(res["prior"].sample(np.random.default_rng(0), 100_000))
    post_iqr = iqr(theta)
    mu_median = float(np.median(theta[:, 4]))
    ok = bool(np.all(post_iqr < prior_iqr)) and 275 <= mu_median <= 375
    report(acceptance_log, 10, ok, f"IQR ratios {np.round(post_iqr / prior_iqr, 3).tolist()}, "
           f"mu median {mu_median:.1f}", time.perf_counter() - t0, 900)


@pytest.mark.slow
def test_criterion_11_levy_sv_two_stage(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    res = run_experiment("levy-sv", tmp_path, seed=0)
    prior = res["prior"].sample(np.random.default_rng(0), 10_000)
    stage1, stage2 = res["results"]["stage1"].theta, res["results"]["stage2"].theta
    xi, lam = 2, 4

    def moved(j):
        return cloud_w1(stage1[:, j:j + 1], prior[:, j:j + 1]) / prior[:, j].std()

    w_lam, w_xi = moved(lam), moved(xi)
    shrink = iqr(stage1[:, lam]) / iqr(stage2[:, lam])
    ok = w_lam <= 0.1 * w_xi and shrink >= 2
    report(acceptance_log, 11, ok, f"stage one scaled W1 to prior: lambda {w_lam:.3f}, xi {w_xi:.3f} "
           f"(ratio {w_lam / w_xi:.3f}); stage two lambda IQR shrink {shrink:.1f}x",
           time.perf_counter() - t0, 1800)


def test_criterion_12_timing_order(acceptance_log):
    t0 = time.perf_counter()
    rows = {r["method"]: r["mean_seconds"] for r in timing_table((500,), d=2, repetitions=10,
                                                                  methods=("hilbert", "swap", "mmd", "exact"))}
    big = timing_table((10_000,), d=2, repetitions=5, methods=("hilbert",))[0]["mean_seconds"]
    ok = rows["hilbert"] < min(rows["swap"], rows["mmd"]) and max(rows["swap"], rows["mmd"]) < rows["exact"]
    ok = ok and big < 0.1
    times = ", ".join(f"{k} {v * 1e3:.2f}ms" for k, v in rows.items())
    report(acceptance_log, 12, ok, f"n=500: {times}; hilbert n=1e4: {big * 1e3:.1f}ms",
           time.perf_counter() - t0)
