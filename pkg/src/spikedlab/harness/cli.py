"""Command line entry point: ``spikedlab <command> --config run.toml --set a.b=v --out DIR``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ..baselines import power_iteration_trials
from ..conditions import condition1_check, condition2_prime_fraction
from ..dynamics import run_ensemble
from ..freeenergy import exit_time_experiment, gfeb_profile
from ..initializers import sample_init
from . import io
from .config import ConfigError, ExperimentConfig
from .recipes import RECIPES, run_recipe
from .seeds import batch_seed, disorder_seed
from .sweep import dynamics_seeds, landscape_for, run_phase_diagram, starts_for
from .threshold import BracketError, estimate_lambda_c, fit_alpha_exponent

log = logging.getLogger("spikedlab")


def _first_cell(cfg):
    cell = cfg.grid()[0]
    return cell, cfg.spec_for(cell)


def cmd_simulate(cfg, out, args):
    cell, spec = _first_cell(cfg)
    dyn_spec, disorder = landscape_for(cfg, spec, 0)
    X0 = starts_for(cfg, dyn_spec, disorder, 0, 0, 1)
    ens = run_ensemble(dyn_spec, disorder, X0, cfg.integrator(beta=cell["beta"]),
                       observers=("l0m", "gradnorm"), seeds=dynamics_seeds(cfg, 0, 0, 1))
    rec = ens.replica(0)
    path = out / "trajectory.csv"
    rec.to_csv(path)
    (t0, t1), _ = cfg.windows()
    wmin = float(ens.window_min(t0, t1)[0])
    summary = io.write_json(out / "summary.json", {
        "cell": cell, "seed": int(ens.seeds[0]), "step_h": ens.step_h, "window_min": wmin,
        "success": bool(cfg.success(wmin)), "final_m": float(ens.m[-1, 0])})
    return [path, summary]


def cmd_sweep(cfg, out, args):
    res = run_phase_diagram(cfg, workers=args.workers)
    log.info("sweep finished in %.1fs", res.wall_clock)
    return res.write(out)


def cmd_threshold(cfg, out, args):
    k, beta = cfg.grid()[0]["k"], cfg.grid()[0]["beta"]
    rows, points, failures, evals = [], [], [], []
    for N in sorted({c["N"] for c in cfg.grid()}):
        try:
            est = estimate_lambda_c(N, k, beta, cfg)
        except BracketError as exc:
            failures.append({"N": N, "error": str(exc)})
            continue
        rows.append([N, est.lambda_c, est.ci[0], est.ci[1], est.bracket[0], est.bracket[1],
                     est.n_replicas, int(est.monotone)])
        points.append((N, est.lambda_c))
        evals.append(io.write_csv(out / f"evaluations_N{N}.csv", ["lam", "success_fraction"],
                                  est.evaluations))
    files = [io.write_csv(out / "thresholds.csv", ["N", "lambda_c", "ci_lo", "ci_hi", "bracket_lo",
                                                  "bracket_hi", "n_replicas", "monotone"], rows)]
    files += evals
    summary = {"k": k, "beta": beta, "mixture": cfg["landscape"]["mixture"], "failures": failures}
    if len(points) >= 3:
        fit = fit_alpha_exponent(points)
        summary["fit"] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                          "slope_stderr": fit.slope_stderr, "slope_ci": list(fit.slope_ci),
                          "reference_slope": (k - 2) / 2}
    files.append(io.write_json(out / "summary.json", summary))
    return files


def cmd_fewell(cfg, out, args):
    cell, spec = _first_cell(cfg)
    fw = cfg["fewell"]
    beta = cell["beta"]
    if math.isinf(beta):
        raise ConfigError("free-energy wells need finite beta")
    d = landscape_for(cfg, spec, 0)[1]
    rng = np.random.default_rng(batch_seed(cfg.master_seed, 0, 0, "fewell"))
    rep = gfeb_profile(spec, d, float(fw["eps"]), beta, int(fw["n_samples"]), rng,
                       n_temps=int(fw["n_temps"]))
    well = out / "well.json"
    rep.to_json(well)
    ex = exit_time_experiment(spec, d, float(fw["eps"]), beta, int(fw["n_chains"]),
                              float(fw["horizon"]), rng, recover_at=float(fw["recover_at"]),
                              step_h=cfg["integrator"].get("step_h"),
                              seed=batch_seed(cfg.master_seed, 0, 0, "exit"))
    times = out / "exit_times.csv"
    ex.to_csv(times)
    summary = io.write_json(out / "summary.json", {
        "cell": cell, "disorder_seed": disorder_seed(cfg.master_seed, spec.N, 0),
        "edge_minus_center": rep.meta["edge_minus_center"],
        "exit_censored_fraction": float(ex.exit_censored.mean()),
        "median_recovery": ex.median_recovery(), "start_acceptance": ex.acceptance})
    return [well, times, summary]


def cmd_check_init(cfg, out, args):
    cell, spec = _first_cell(cfg)
    ci = cfg["check_init"]
    d = landscape_for(cfg, spec, 0)[1]
    rng = np.random.default_rng(batch_seed(cfg.master_seed, 0, 0, "check_init"))
    samples = sample_init(spec, d, cfg.init_spec(), int(ci["n_samples"]), rng)
    level = ci["level"]
    beta = cell["beta"]
    rep = condition1_check(samples.x, spec, d, level, float(ci["delta"]), T=float(ci["T"]),
                           beta=beta, n_replicas=int(ci["n_replicas"]),
                           seed=batch_seed(cfg.master_seed, 0, 0, "semigroup"),
                           step_h=cfg["integrator"].get("step_h"))
    c1 = out / "condition1.json"
    rep.to_json(c1)
    c2 = io.write_json(out / "condition2.json", {
        "delta": float(ci["delta"]),
        "fraction_violating": condition2_prime_fraction(samples.x, float(ci["delta"])),
        "acceptance": samples.acceptance})
    return [c1, c2]


def cmd_baseline(cfg, out, args):
    b = cfg["baseline"]
    seed = batch_seed(cfg.master_seed, 0, 0, "baseline")
    ov = power_iteration_trials(int(b["N"]), int(b["k"]), float(b["lam"]), int(b["n_trials"]),
                                int(b["iters"]), seed, n_obs=int(b["n_obs"]))
    f1 = io.write_csv(out / "overlaps.csv", ["trial", "abs_overlap"], [[i, float(v)] for i, v in enumerate(ov)])
    f2 = io.write_json(out / "summary.json", {**b, "seed": seed, "mean_overlap": float(ov.mean()),
                                             "max_overlap": float(ov.max())})
    return [f1, f2]


def cmd_recipe(cfg, out, args):
    params = dict(cfg["recipe"])
    if "mixture" in params:
        params["mixture"] = {int(p): float(a) for p, a in params["mixture"].items()}
    params.setdefault("seed", cfg.master_seed)
    res = run_recipe(args.name, **params)
    path = out / f"{args.name}.json"
    res.to_json(path)
    print(f"{args.name}: {'PASS' if res.passed else 'FAIL'}")
    return [path]


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "threshold": cmd_threshold,
            "fewell": cmd_fewell, "check-init": cmd_check_init, "baseline": cmd_baseline,
            "recipe": cmd_recipe}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikedlab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML experiment file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. landscape.N=[32,64]")
        p.add_argument("--out", type=Path, help="output directory (default: output_dir)")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None)
        if name == "recipe":
            p.add_argument("name", choices=RECIPES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config, args.overrides)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"spikedlab: config error: {exc}", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    files = COMMANDS[args.command](cfg, out, args)
    manifest = io.write_manifest(out, args.command, cfg.raw, files)
    log.info("wrote %s", manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
