"""Restricted free energies, entropy profiles of the correlation, free energy wells and exit times.

F(A) = (1/N) log int_A exp(-beta H) dx with dx the normalized volume measure.
Windows are given in correlation units m = x_1/sqrt(N) unless stated otherwise.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import betaincinv, logsumexp

from .dynamics import IntegratorConfig, run_ensemble
from .initializers import (InitSpec, banded_gibbs_sampler, latitude_logpdf, mala,
                           uniform_window)
from .landscape import Disorder, MixtureSpec, batch_energy_and_gradient, check_match

MIN_ESS = 50


class DegenerateWeightsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Band:
    """Equatorial band |m| < half_width around ``center`` (correlation units)."""

    half_width: float
    center: float = 0.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("band half_width must be positive")
        if self.center - self.half_width >= 1 or self.center + self.half_width <= -1:
            raise ValueError("band does not meet the sphere")

    @property
    def window(self):
        return (max(self.center - self.half_width, -1.0), min(self.center + self.half_width, 1.0))

    def x1_bound(self, N: int) -> float:
        return self.half_width * math.sqrt(N)


def _windows(window):
    if isinstance(window, Band):
        return [window.window]
    if len(window) == 2 and np.isscalar(window[0]):
        return [(float(window[0]), float(window[1]))]
    return [(float(lo), float(hi)) for lo, hi in window]


def log_volume(N: int, window) -> float:
    """log of the normalized volume of {m in window} by 1-D quadrature of the latitude density."""
    total = []
    for lo, hi in _windows(window):
        lo, hi = max(lo, -1.0), min(hi, 1.0)
        if hi <= lo:
            continue
        m_star = min(max(0.0, lo), hi)
        ref = float(latitude_logpdf(m_star, N))
        val, _ = integrate.quad(lambda m: math.exp(float(latitude_logpdf(m, N)) - ref), lo, hi,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        total.append(ref + math.log(val))
    if not total:
        return -math.inf
    return float(logsumexp(total))


def sample_window(N: int, window, rng: np.random.Generator, n: int) -> np.ndarray:
    """Exact samples from the volume measure restricted to a window or union of windows."""
    wins = _windows(window)
    if len(wins) == 1:
        return uniform_window(N, wins[0][0], wins[0][1], rng, n)
    logv = np.array([log_volume(N, w) for w in wins])
    counts = rng.multinomial(n, np.exp(logv - logsumexp(logv)))
    parts = [uniform_window(N, lo, hi, rng, c) for (lo, hi), c in zip(wins, counts) if c]
    return np.concatenate(parts)


@dataclass
class FreeEnergyEstimate:
    value: float
    std_error: float
    ess: float
    log_volume: float
    method: str
    n_samples: int


def _logmeanexp_jackknife(logw):
    n = logw.size
    est = logsumexp(logw) - math.log(n)
    shift = logw.max()
    w = np.exp(logw - shift)
    s = w.sum()
    loo = np.log(np.maximum(s - w, 1e-300)) + shift - math.log(n - 1)
    var = (n - 1) / n * np.sum((loo - loo.mean()) ** 2)
    ess = s * s / np.sum(w * w)
    return float(est), float(math.sqrt(var)), float(ess)


def restricted_free_energy(spec: MixtureSpec, disorder: Disorder, window, beta: float,
                           n_samples: int, rng: np.random.Generator, lam=None,
                           method: str = "ais", n_temps: int = 100, mala_steps: int = 3,
                           mala_step: float = 0.05) -> FreeEnergyEstimate:
    """F(A) = (1/N)[log vol(A) + log E_{vol|A} exp(-beta H)].

    ``method="direct"`` averages exp(-beta H) over exact volume samples.
    ``method="ais"`` anneals the same samples from beta = 0 to ``beta`` through
    MALA moves confined to the window, which keeps the weights usable at
    moderate beta N. ``lam=0`` gives the pure-noise free energy F0.
    """
    check_match(spec, disorder)
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if method not in ("direct", "ais"):
        raise ValueError("method must be 'direct' or 'ais'")
    N = spec.N
    lam = spec.lam if lam is None else float(lam)
    wins = _windows(window)
    logvol = log_volume(N, wins)
    if beta == 0:
        return FreeEnergyEstimate(logvol / N, 0.0, float(n_samples), logvol, method, n_samples)
    if method == "ais" and len(wins) > 1:
        parts = [restricted_free_energy(spec, disorder, w, beta, n_samples, rng, lam, "ais",
                                        n_temps, mala_steps, mala_step) for w in wins]
        return _combine(parts, N, logvol, "ais")
    X = np.ascontiguousarray(sample_window(N, wins, rng, n_samples))
    if method == "direct":
        e, _ = batch_energy_and_gradient(spec, disorder, X, lam)
        logw = -beta * e
    else:
        schedule = beta * np.linspace(0.0, 1.0, n_temps + 1) ** 2
        logw = np.zeros(n_samples)
        for b_prev, b in zip(schedule[:-1], schedule[1:]):
            e, _ = batch_energy_and_gradient(spec, disorder, X, lam)
            logw -= (b - b_prev) * e
            mala(spec, disorder, X, b, lam, mala_step, mala_steps, rng, window=wins[0])
    est, se, ess = _logmeanexp_jackknife(logw)
    if ess < MIN_ESS:
        warnings.warn(f"effective sample size {ess:.1f} below {MIN_ESS}; importance weights are "
                      f"degenerate", DegenerateWeightsWarning, stacklevel=2)
    return FreeEnergyEstimate((logvol + est) / N, se / N, ess, logvol, method, n_samples)


def _combine(parts, N, logvol, method):
    """Free energy of a disjoint union from the free energies of its pieces."""
    vals = np.array([p.value * N for p in parts])
    tot = logsumexp(vals)
    wts = np.exp(vals - tot)
    se = math.sqrt(float(np.sum((wts * np.array([p.std_error * N for p in parts])) ** 2)))
    return FreeEnergyEstimate(tot / N, se / N, min(p.ess for p in parts), logvol, method,
                              sum(p.n_samples for p in parts))


def latitude_strata(N: int, n_strata: int):
    """Partition of [-1, 1] into windows of equal volume."""
    q = np.linspace(0.0, 1.0, n_strata + 1)
    edges = []
    for u in q:
        if u <= 0:
            edges.append(-1.0)
        elif u >= 1:
            edges.append(1.0)
        elif u < 0.5:
            edges.append(-math.sqrt(1.0 - betaincinv((N - 1) / 2, 0.5, 2 * u)))
        else:
            edges.append(math.sqrt(1.0 - betaincinv((N - 1) / 2, 0.5, 2 * (1 - u))))
    return list(zip(edges[:-1], edges[1:]))


def sphere_free_energy(spec, disorder, beta, n_samples, rng, lam=None, n_strata: int = 8,
                       **kw) -> FreeEnergyEstimate:
    """F over the whole sphere from a stratified latitude partition."""
    parts = [restricted_free_energy(spec, disorder, w, beta, n_samples, rng, lam, **kw)
             for w in latitude_strata(spec.N, n_strata)]
    return _combine(parts, spec.N, 0.0, "stratified")


@dataclass
class WellReport:
    """Entropy profile I(a; r) = -log pi(x_1 in B_r(a)) on a grid of x_1 centers."""

    grid: list
    radii: list
    I_values: list
    estimator_errors: list
    reference: str
    well: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _disjoint(*intervals):
    iv = sorted(intervals)
    return all(a[1] <= b[0] for a, b in zip(iv[:-1], iv[1:]))


def detect_well(grid, radii, I_values, h: float = 0.0):
    """Best triple a < c < b with disjoint open windows; returned if its height is at least h."""
    best = None
    n = len(grid)
    for i, j, l in itertools.combinations(range(n), 3):
        a, c, b = grid[i], grid[j], grid[l]
        if not (a < c < b):
            continue
        wins = [(a - radii[i], a + radii[i]), (c - radii[j], c + radii[j]),
                (b - radii[l], b + radii[l])]
        if not _disjoint(*wins):
            continue
        height = min(I_values[i], I_values[l]) - I_values[j]
        if best is None or height > best["height"]:
            best = {"a": a, "c": c, "b": b, "height": float(height),
                    "eps": float(min(radii[i], radii[l])), "eta": float(radii[j])}
    if best is not None and best["height"] >= h:
        return best
    return None


def entropy_profile(spec: MixtureSpec, disorder: Disorder, beta: float, grid, epsilon,
                    n_samples: int, rng: np.random.Generator, h: float = 0.0,
                    reference: str = "none", lam=None, **kw) -> WellReport:
    """I(a; eps) for x_1-centers ``grid``; ``epsilon`` is a radius or one radius per center.

    With ``reference="sphere"`` the whole-sphere free energy is estimated so I
    values are absolute; with ``"none"`` they share an unknown additive constant,
    which cancels in well heights.
    """
    N = spec.N
    sq = math.sqrt(N)
    radii = list(np.broadcast_to(np.asarray(epsilon, dtype=np.float64), (len(grid),)))
    vals, errs = [], []
    for a, r in zip(grid, radii):
        est = restricted_free_energy(spec, disorder, ((a - r) / sq, (a + r) / sq), beta,
                                     n_samples, rng, lam, **kw)
        vals.append(est.value)
        errs.append(est.std_error)
    ref, ref_err = 0.0, 0.0
    if reference == "sphere":
        s = sphere_free_energy(spec, disorder, beta, n_samples, rng, lam, **kw)
        ref, ref_err = s.value, s.std_error
    elif reference != "none":
        raise ValueError("reference must be 'none' or 'sphere'")
    I = [float(-N * (v - ref)) for v in vals]
    E = [float(N * math.hypot(e, ref_err)) for e in errs]
    well = detect_well(list(map(float, grid)), [float(r) for r in radii], I, h)
    return WellReport(list(map(float, grid)), [float(r) for r in radii], I, E, reference, well,
                      {"beta": beta, "N": N, "lam": spec.lam if lam is None else lam})


def gfeb_windows(N: int, eps: float) -> dict:
    """x_1-windows of the equatorial well: center B_{N^eps}(0), edges B_{N^eps/2}(+-(3/2) N^eps)."""
    s = N ** eps
    return {"center": (0.0, s), "upper": (1.5 * s, 0.5 * s), "lower": (-1.5 * s, 0.5 * s)}


def gfeb_eps_range(k: float, alpha: float) -> float:
    """Upper end of the admissible well exponent, (1/k)((k-2)/2 - alpha)."""
    return ((k - 2) / 2 - alpha) / k


def gfeb_profile(spec: MixtureSpec, disorder: Disorder, eps: float, beta: float, n_samples: int,
                 rng: np.random.Generator, **kw) -> WellReport:
    w = gfeb_windows(spec.N, eps)
    grid = [w["lower"][0], w["center"][0], w["upper"][0]]
    radii = [w["lower"][1], w["center"][1], w["upper"][1]]
    rep = entropy_profile(spec, disorder, beta, grid, radii, n_samples, rng, **kw)
    rep.meta.update({"eps": eps, "eps_admissible_below": gfeb_eps_range(spec.k, spec.alpha)
                     if spec.alpha is not None else None,
                     "edge_minus_center": min(rep.I_values[0], rep.I_values[2]) - rep.I_values[1],
                     "upper_minus_center": rep.I_values[2] - rep.I_values[1]})
    return rep


@dataclass
class ExitTimes:
    """Per-chain exit time from |x_1| < exit_bound and recovery time (m >= recover_at); NaN = censored."""

    exit_time: np.ndarray
    recovery_time: np.ndarray
    horizon: float
    start_bound: float
    exit_bound: float
    recover_at: float
    acceptance: float

    @property
    def exit_censored(self) -> np.ndarray:
        return np.isnan(self.exit_time)

    @property
    def recovery_censored(self) -> np.ndarray:
        return np.isnan(self.recovery_time)

    def median_recovery(self) -> float:
        """Median with censored values counted as +inf."""
        return float(np.median(np.where(self.recovery_censored, np.inf, self.recovery_time)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "exit_time", "exit_censored", "recovery_time", "recovery_censored"])
            for i, (e, r) in enumerate(zip(self.exit_time, self.recovery_time)):
                w.writerow([i, "" if np.isnan(e) else f"{e:.17g}", int(np.isnan(e)),
                            "" if np.isnan(r) else f"{r:.17g}", int(np.isnan(r))])


def exit_time_experiment(spec: MixtureSpec, disorder: Disorder, eps: float, beta: float,
                         n_chains: int, horizon: float, rng: np.random.Generator,
                         recover_at: float = 0.5, burn_in_steps: int = 1000,
                         mala_step: float = 0.05, record_every: float = 0.05, step_h=None,
                         seed: int = 0, wait_for_recovery: bool = True) -> ExitTimes:
    """Start from pi restricted to |x_1| <= (3/2) N^eps, run Langevin dynamics, time the exit
    through |x_1| = 2 N^eps. Stops early once every chain has exited (and recovered, if asked)."""
    N = spec.N
    start_bound = 1.5 * N ** eps
    exit_bound = 2.0 * N ** eps
    if exit_bound >= math.sqrt(N):
        raise ValueError("exit bound lies outside the sphere; eps too large for this N")
    init = InitSpec(kind="banded_gibbs", beta_init=beta, band_halfwidth=start_bound,
                    burn_in_steps=burn_in_steps, mala_step=mala_step, target="pi",
                    max_beta=max(beta, 1.0))
    starts = banded_gibbs_sampler(spec, disorder, init, rng, n_chains)
    cfg = IntegratorConfig(step_h=step_h, horizon_T=horizon, record_every=record_every,
                           beta=beta, seed=seed)
    exited = np.zeros(n_chains, dtype=bool)
    recovered = np.zeros(n_chains, dtype=bool)
    sq = math.sqrt(N)

    def stop(t, X):
        exited[:] |= np.abs(X[:, 0]) >= exit_bound
        recovered[:] |= X[:, 0] / sq >= recover_at
        return bool(exited.all() and (recovered.all() or not wait_for_recovery))

    ens = run_ensemble(spec, disorder, starts.x, cfg, stop=stop)
    return ExitTimes(ens.exit_times(exit_bound), ens.hitting_times(recover_at), horizon,
                     start_bound, exit_bound, recover_at, starts.acceptance)
