"""Command-line driver.

Exit codes: 0 on success, 1 for usage or configuration errors detected
before anything runs, 2 for failures during the run.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import (ConfigError, apply_overrides, build_discrepancy, build_model, build_prior,
                     distance_spec, load_config, validate)
from .experiments import EXPERIMENTS, TIMED_METHODS, quantile_table, run_experiment, timing_table
from .mewe import MEWEConfig, mewe_optimize
from .smc import SMCConfig, rejection_abc, smc_run

COMMANDS = ("simulate", "distance", "rejection", "smc", "mewe", "experiment", "timing")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker threads (default: all cores)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. smc.budget=5000 (repeatable)")

    parser = _Parser(prog="wabc", description="Wasserstein ABC and minimum-distance estimation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="simulate a dataset from a model")
    p = sub.add_parser("distance", parents=[common], help="distance between two dataset files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--method", help="shorthand for --set distance.method=...")
    sub.add_parser("rejection", parents=[common], help="rejection ABC")
    sub.add_parser("smc", parents=[common], help="adaptive SMC sampler")
    sub.add_parser("mewe", parents=[common], help="minimum expected Wasserstein estimate")
    p = sub.add_parser("experiment", parents=[common], help="canned experiment")
    p.add_argument("name", nargs="?", help=f"one of: {', '.join(sorted(EXPERIMENTS))}")
    p = sub.add_parser("timing", parents=[common], help="distance timing table")
    p.add_argument("--n", type=int, action="append", help="sample size (repeatable)")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--repetitions", type=int, help="repetitions per size")
    return parser


def resolve_config(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    cfg["command"] = args.command
    overrides = list(args.overrides)
    if getattr(args, "method", None):
        overrides.append(f"distance.method={args.method}")
    if args.command == "experiment" and args.name:
        overrides.append(f"experiment.name={args.name}")
    if args.command == "timing":
        if args.n:
            overrides.append(f"timing.n={json.dumps(args.n)}")
        if args.d:
            overrides.append(f"timing.d={args.d}")
        if args.repetitions:
            overrides.append(f"timing.repetitions={args.repetitions}")
    for flag in ("seed", "out", "workers"):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{flag}={json.dumps(value)}")
    cfg = apply_overrides(cfg, overrides)
    cfg.setdefault("seed", 0)
    cfg.setdefault("workers", os.cpu_count() or 1)
    return validate(cfg)


def _out(cfg) -> Path:
    out = Path(cfg.get("out", "wabc-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _observed(cfg):
    if "data" not in cfg:
        raise ConfigError("'data' (observed dataset CSV) is required for this command")
    return io.read_dataset(cfg["data"])


def _prepare(cfg):
    """Build everything from the config; errors here are configuration errors."""
    cmd = cfg["command"]
    if cmd == "simulate":
        model = build_model(cfg)
        block = cfg["model"]
        if "theta" not in block or "n" not in block:
            raise ConfigError("simulate needs model.theta and model.n")
        if not model.valid(np.asarray(block["theta"], dtype=float)):
            raise ConfigError(f"invalid parameters {block['theta']} for model {model.name!r}")
        return {"model": model}
    if cmd == "distance":
        return {"spec": distance_spec(cfg.get("distance"))}
    if cmd in ("rejection", "smc", "mewe"):
        model = build_model(cfg)
        prior = build_prior(cfg, model)
        y = _observed(cfg)
        if cmd == "mewe":
            return {"model": model, "prior": prior, "observed": y}
        sim_model, dist = build_discrepancy(cfg, y, model)
        return {"model": model, "prior": prior, "observed": y, "sim_model": sim_model, "distance": dist}
    if cmd == "experiment":
        block = cfg.get("experiment")
        if not block or block.get("name") not in EXPERIMENTS:
            name = (block or {}).get("name")
            raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
        return {}
    return {}


def cmd_simulate(cfg, ctx) -> int:
    model = ctx["model"]
    block = cfg["model"]
    rng = np.random.default_rng(cfg["seed"])
    data = model.simulate(np.asarray(block["theta"], dtype=float), block["n"], rng)
    out = _out(cfg)
    io.write_dataset(out / "data.csv", data)
    io.write_metadata(out / "metadata.json", cfg, cfg["seed"], "simulate")
    print(out / "data.csv")
    return 0


def _printable(diag: dict) -> dict:
    keep = {}
    for k, v in diag.items():
        if k in ("plan", "assignment"):
            continue
        keep[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return keep


def cmd_distance(cfg, ctx, file_a, file_b) -> int:
    from . import distances as D
    from .hilbert import BoxMapping

    y, z = io.read_dataset(file_a), io.read_dataset(file_b)
    if y.shape[1] != z.shape[1]:
        raise ValueError(f"dimension mismatch: {y.shape[1]} vs {z.shape[1]}")
    spec = ctx["spec"]
    bound = spec.bind(y)
    yt, zt = bound.transform(y), bound.transform(z)
    metric = bound.metric
    method = spec.method
    mapping = BoxMapping.from_data(np.vstack([yt, zt]))
    if method == "exact":
        res = D.exact_transport(yt, zt, metric)
    elif method == "hilbert":
        res = D.hilbert_distance(yt, zt, metric, mapping, spec.bits)
    elif method == "swap":
        res = D.swap_distance(yt, zt, metric, max_sweeps=spec.max_sweeps, mapping=mapping, bits=spec.bits)
    elif method == "sinkhorn":
        res = D.sinkhorn_divergence(yt, zt, metric, zeta=spec.zeta or 0.1)
    elif method == "energy":
        res = D.energy_distance(yt, zt, metric)
    elif method == "mmd":
        res = D.mmd(yt, zt, s=spec.bandwidth, metric=metric)
    else:
        res = D.DistanceResult(bound.between(zt), "euclidean")
    print(json.dumps({"method": res.method, "value": res.value, "diagnostics": _printable(res.diagnostics)},
                     default=float))
    return 0


def _smc_config(cfg, ctx) -> SMCConfig:
    block = dict(cfg.get("smc", {}))
    n = cfg.get("model", {}).get("n", ctx["observed"].shape[0])
    return SMCConfig(model=ctx["sim_model"], prior=ctx["prior"], distance=ctx["distance"], n=n,
                     seed=cfg["seed"], workers=cfg["workers"], **block)


def cmd_rejection(cfg, ctx) -> int:
    block = cfg.get("rejection", {})
    eps = block.get("epsilon", float("inf"))
    budget = block.get("budget", 10_000)
    n = cfg.get("model", {}).get("n", ctx["observed"].shape[0])
    res = rejection_abc(ctx["prior"], ctx["sim_model"], ctx["distance"], eps, budget, n,
                        np.random.default_rng(cfg["seed"]))
    out = _out(cfg)
    names = list(ctx["model"].param_names)
    io.write_rows(out / "accepted.csv", [*names, "distance"],
                  [[*map(float, t), float(d)] for t, d in zip(res.theta, res.distance)])
    io.write_metadata(out / "metadata.json", cfg, cfg["seed"], "rejection",
                      {"accepted": int(res.theta.shape[0]), "acceptance_rate": res.acceptance_rate})
    print(f"accepted {res.theta.shape[0]} of {res.simulations} (rate {res.acceptance_rate:.4g})")
    return 0


def cmd_smc(cfg, ctx) -> int:
    res = smc_run(_smc_config(cfg, ctx))
    out = _out(cfg)
    names = list(ctx["model"].param_names)
    io.write_trace(out / "trace.csv", res.trace, names)
    io.write_records(out / "quantiles.csv", quantile_table(res, names))
    io.write_metadata(out / "metadata.json", cfg, cfg["seed"], "smc",
                      {"steps": len(res.trace) - 1, "sim_count": res.system.sim_count,
                       "final_epsilon": res.system.epsilon, "stop_reason": res.stop_reason})
    print(f"{len(res.trace) - 1} steps, {res.system.sim_count} simulations, "
          f"final epsilon {res.system.epsilon:.6g} ({res.stop_reason})")
    return 0


def cmd_mewe(cfg, ctx) -> int:
    block = dict(cfg.get("mewe", {}))
    if "start" in block:
        block["start"] = np.asarray(block["start"], dtype=float)
    p = cfg.get("distance", {}).get("p", 1.0)
    config = MEWEConfig(seed=cfg["seed"], workers=cfg["workers"], p=p,
                        distance=distance_spec(cfg.get("distance")), **block)
    res = mewe_optimize(ctx["observed"], ctx["model"], config, ctx["prior"])
    out = _out(cfg)
    names = list(ctx["model"].param_names)
    io.write_records(out / "restarts.csv", res.table(names))
    io.write_metadata(out / "metadata.json", cfg, cfg["seed"], "mewe",
                      {"estimate": res.theta, "objective": res.objective, "converged": res.converged})
    print(json.dumps({"theta": dict(zip(names, map(float, res.theta))), "objective": res.objective,
                      "evaluations": res.evaluations, "converged": res.converged}))
    return 0


def cmd_experiment(cfg, ctx) -> int:
    block = cfg["experiment"]
    out = _out(cfg) / block["name"]
    res = run_experiment(block["name"], out, seed=cfg["seed"], workers=cfg["workers"],
                         **block.get("params", {}))
    io.write_metadata(out / "metadata.json", cfg, cfg["seed"], "experiment", {"elapsed": res["elapsed"]})
    print(f"experiment {block['name']} finished in {res['elapsed']:.1f}s; tables in {out}")
    return 0


def cmd_timing(cfg, ctx) -> int:
    block = cfg.get("timing", {})
    rows = timing_table(block.get("n", [500]), block.get("d", 2), block.get("repetitions", 10),
                        block.get("methods", TIMED_METHODS), seed=cfg["seed"])
    out = _out(cfg)
    io.write_records(out / "timing.csv", rows)
    io.write_metadata(out / "metadata.json", cfg, cfg["seed"], "timing")
    for r in rows:
        print(f"{r['method']:>9} n={r['n']:<6} mean {r['mean_seconds']:.6f}s  sd {r['sd_seconds']:.6f}s")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        ctx = _prepare(cfg)
    except (UsageError, ConfigError) as exc:
        print(f"wabc: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        cmd = cfg["command"]
        if cmd == "distance":
            return cmd_distance(cfg, ctx, args.file_a, args.file_b)
        return globals()[f"cmd_{cmd}"](cfg, ctx)
    except Exception as exc:  # runtime failure
        print(f"wabc: {cmd} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
