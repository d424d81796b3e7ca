"""Bisection for the critical signal strength and log-log exponent fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import ExperimentConfig
from .sweep import run_task


class BracketError(RuntimeError):
    pass


@dataclass
class ThresholdEstimate:
    N: int
    lambda_c: float
    ci: tuple
    bracket: tuple
    evaluations: list = field(default_factory=list)
    n_replicas: int = 0
    monotone: bool = True


def _threshold_config(cfg: ExperimentConfig, N: int, k: float, beta) -> ExperimentConfig:
    raw = dict(cfg.raw)
    raw["landscape"] = {**cfg.raw["landscape"], "N": [int(N)], "k": [float(k)],
                        "beta": [beta if not (isinstance(beta, float) and math.isinf(beta)) else "inf"],
                        "alpha": None, "lam": [float(cfg["threshold"]["lam_lo"])]}
    return ExperimentConfig.from_dict(raw)


def success_fraction(cfg: ExperimentConfig, lam: float) -> float:
    """Success fraction at ``lam`` over the fixed disorders and starts of cell 0 (common random numbers)."""
    nd = int(cfg["replicas"]["n_disorder"])
    hits = total = 0
    for d in range(nd):
        r = run_task(cfg.raw, 0, d, lam=lam)
        hits += int(np.sum(r["success"]))
        total += len(r["success"])
    return hits / total


def _interp_log(points, level):
    """log-linear interpolation of the lam where the success curve crosses ``level``."""
    pts = sorted(points)
    lams = np.log([p[0] for p in pts])
    ps = np.maximum.accumulate([p[1] for p in pts])
    if level <= ps[0]:
        return math.exp(lams[0])
    if level >= ps[-1]:
        return math.exp(lams[-1])
    j = int(np.searchsorted(ps, level, side="left"))
    j = max(j, 1)
    p0, p1 = ps[j - 1], ps[j]
    w = 0.0 if p1 == p0 else (level - p0) / (p1 - p0)
    return math.exp(lams[j - 1] + w * (lams[j] - lams[j - 1]))


def estimate_lambda_c(N: int, k: float, beta, cfg: ExperimentConfig) -> ThresholdEstimate:
    """Bisection in log lam for success fraction = target, to relative bracket width rel_tol.

    The disorders and starts are held fixed across lam, so the empirical
    success curve is close to monotone. The CI maps the binomial band
    target +- 1.96 sqrt(1/4R) through the interpolated curve.
    """
    tc = cfg["threshold"]
    tcfg = _threshold_config(cfg, N, k, beta)
    target = float(tc.get("target", 0.5))
    lo, hi = float(tc["lam_lo"]), float(tc["lam_hi"])
    evals = {}

    def p(lam):
        if lam not in evals:
            evals[lam] = success_fraction(tcfg, lam)
        return evals[lam]

    for _ in range(int(tc.get("max_widen", 4)) + 1):
        if p(lo) < target <= p(hi):
            break
        if p(lo) >= target:
            lo /= 4.0
        if p(hi) < target:
            hi *= 4.0
    else:
        raise BracketError(f"no bracket for N={N}: p({lo:.4g})={p(lo):.3f}, p({hi:.4g})={p(hi):.3f}")
    while hi / lo - 1.0 > float(tc["rel_tol"]):
        mid = math.sqrt(lo * hi)
        if p(mid) >= target:
            hi = mid
        else:
            lo = mid
    pts = sorted(evals.items())
    R = int(tcfg["replicas"]["n_disorder"]) * int(tcfg["replicas"]["n_init"])
    half = 1.96 * math.sqrt(0.25 / R)
    monotone = all(b[1] >= a[1] for a, b in zip(pts[:-1], pts[1:]))
    lam_c = _interp_log(pts, target)
    ci = (_interp_log(pts, target - half), _interp_log(pts, target + half))
    return ThresholdEstimate(int(N), lam_c, ci, (lo, hi), [list(e) for e in pts], R, monotone)


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    slope_ci: tuple


def fit_alpha_exponent(points) -> ExponentFit:
    """Least squares of log lam_c on log N."""
    if len(points) < 3:
        raise ValueError("need at least three (N, lambda_c) points")
    N = np.array([p[0] for p in points], dtype=np.float64)
    lam = np.array([p[1] for p in points], dtype=np.float64)
    res = stats.linregress(np.log(N), np.log(lam))
    dof = len(points) - 2
    tq = stats.t.ppf(0.975, dof) if dof > 0 else math.inf
    se = float(res.stderr)
    return ExponentFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), se,
                       (float(res.slope - tq * se), float(res.slope + tq * se)))
