"""Phase-diagram sweeps over (N, k, alpha or lam, beta)."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from ..dynamics import run_ensemble
from ..initializers import sample_init
from ..landscape import MixtureSpec, cached_disorder, zero_disorder
from . import io
from .config import ExperimentConfig
from .seeds import batch_seed, disorder_seed, replica_seed, seed_grid, split

log = logging.getLogger(__name__)


def wilson(successes: int, total: int, level: float = 0.95):
    if total == 0:
        return 0.0, 1.0
    ci = binomtest(successes, total).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def landscape_for(cfg: ExperimentConfig, spec: MixtureSpec, d_index: int):
    """(spec, disorder) used by the dynamics; pure-signal runs swap in a zero linear term."""
    if cfg["landscape"].get("pure_signal"):
        flat = spec.replace(mixture={1: 1.0})
        return flat, zero_disorder(flat)
    return spec, cached_disorder(spec, disorder_seed(cfg.master_seed, spec.N, d_index))


def starts_for(cfg: ExperimentConfig, spec, disorder, cell_index: int, d_index: int, n: int):
    """Initial points; per-replica streams for the direct samplers, one stream per batch for MCMC."""
    init = cfg.init_spec()
    if init.kind in ("gibbs_noise", "banded_gibbs"):
        rng = np.random.default_rng(batch_seed(cfg.master_seed, cell_index, d_index, "init"))
        return sample_init(spec, disorder, init, n, rng).x
    rows = []
    for i in range(n):
        s_init, _ = split(replica_seed(cfg.master_seed, cell_index, d_index, i))
        rows.append(sample_init(spec, disorder, init, 1, np.random.default_rng(s_init)).x[0])
    return np.array(rows)


def dynamics_seeds(cfg, cell_index, d_index, n):
    return [split(replica_seed(cfg.master_seed, cell_index, d_index, i))[1] for i in range(n)]


def run_task(raw: dict, cell_index: int, d_index: int, lam=None) -> dict:
    """One (cell, disorder) block of n_init replicas. ``lam`` overrides the cell's signal strength."""
    cfg = ExperimentConfig(raw)
    cell = cfg.grid()[cell_index]
    spec = cfg.spec_for(cell)
    if lam is not None:
        spec = spec.replace(lam=float(lam))
    n = int(cfg["replicas"]["n_init"])
    dyn_spec, disorder = landscape_for(cfg, spec, d_index)
    X0 = starts_for(cfg, dyn_spec, disorder, cell_index, d_index, n)
    (t0, t1), (a0, a1) = cfg.windows()
    ens = run_ensemble(dyn_spec, disorder, X0, cfg.integrator(beta=cell["beta"], horizon=t1),
                       seeds=dynamics_seeds(cfg, cell_index, d_index, n))
    main, alt = ens.window_min(t0, t1), ens.window_min(a0, a1)
    return {"cell": cell_index, "disorder": d_index, "min_m": main, "alt_min_m": alt,
            "success": cfg.success(main), "alt_success": cfg.success(alt),
            "final_m": ens.m[-1], "step_h": ens.step_h}


def _safe_task(args):
    raw, c, d = args
    try:
        return run_task(raw, c, d)
    except Exception as exc:  # a failed block marks its cell incomplete
        log.warning("cell %d disorder %d failed: %s", c, d, exc)
        return {"cell": c, "disorder": d, "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class PhaseDiagramResult:
    cells: list
    replicas: list
    config: dict
    monotonicity_violations: list
    wall_clock: float = field(default=0.0, compare=False)

    def write(self, out_dir) -> list:
        """cells.csv, replicas.csv, summary.json. Wall-clock is kept out of files for reproducibility."""
        out = out_dir
        cols = ["index", "N", "k", "alpha", "lam", "beta", "successes", "total", "rate",
                "wilson_lo", "wilson_hi", "alt_successes", "alt_rate", "complete"]
        f1 = io.write_csv(f"{out}/cells.csv", cols, [[c[k] for k in cols] for c in self.cells])
        rcols = ["cell", "disorder", "init", "seed", "min_m", "alt_min_m", "success", "alt_success"]
        f2 = io.write_csv(f"{out}/replicas.csv", rcols, self.replicas)
        f3 = io.write_json(f"{out}/summary.json", {"cells": self.cells,
                                                   "monotonicity_violations": self.monotonicity_violations})
        return [f1, f2, f3]


def _monotonicity(cells):
    groups = {}
    for c in cells:
        groups.setdefault((c["N"], c["k"], c["beta"]), []).append(c)
    bad = []
    for key, group in groups.items():
        group = sorted(group, key=lambda c: c["lam"])
        for lo, hi in zip(group[:-1], group[1:]):
            if hi["rate"] < lo["rate"]:
                bad.append({"N": key[0], "k": key[1], "beta": key[2], "lam_lo": lo["lam"],
                            "lam_hi": hi["lam"], "rate_lo": lo["rate"], "rate_hi": hi["rate"]})
    return bad


def run_phase_diagram(cfg: ExperimentConfig, workers: int | None = None) -> PhaseDiagramResult:
    """Success probability of the configured rule for every grid cell.

    Blocks run in a process pool when ``workers > 1``; the fold over results is
    ordered by (cell, disorder, init), so output does not depend on scheduling.
    """
    start = time.perf_counter()
    workers = int(cfg["workers"] if workers is None else workers)
    cells = cfg.grid()
    nd, ni = int(cfg["replicas"]["n_disorder"]), int(cfg["replicas"]["n_init"])
    seeds = seed_grid(cfg.master_seed, len(cells), nd, ni)
    tasks = [(cfg.raw, c, d) for c in range(len(cells)) for d in range(nd)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_task, tasks))
    else:
        results = [_safe_task(t) for t in tasks]
    results.sort(key=lambda r: (r["cell"], r["disorder"]))

    out_cells, rows = [], []
    for ci, cell in enumerate(cells):
        mine = [r for r in results if r["cell"] == ci]
        ok = [r for r in mine if "error" not in r]
        succ = sum(int(np.sum(r["success"])) for r in ok)
        alt = sum(int(np.sum(r["alt_success"])) for r in ok)
        total = ni * len(ok)
        lo, hi = wilson(succ, total)
        out_cells.append({
            "index": ci, **cell, "successes": succ, "total": total,
            "rate": succ / total if total else math.nan, "wilson_lo": lo, "wilson_hi": hi,
            "alt_successes": alt, "alt_rate": alt / total if total else math.nan,
            "complete": len(ok) == nd, "errors": [r["error"] for r in mine if "error" in r],
            "disorder_seeds": [disorder_seed(cfg.master_seed, cell["N"], d) for d in range(nd)],
        })
        for r in ok:
            for i in range(ni):
                rows.append([ci, r["disorder"], i, int(seeds[ci, r["disorder"], i]),
                             float(r["min_m"][i]), float(r["alt_min_m"][i]),
                             int(r["success"][i]), int(r["alt_success"][i])])
    res = PhaseDiagramResult(out_cells, rows, cfg.raw, _monotonicity(out_cells))
    res.wall_clock = time.perf_counter() - start
    return res
