"""Recovery, stability and refutation experiments at desk scale.

Every recipe returns a :class:`RecipeResult` whose ``summary`` is a JSON-ready
dict with the parameters, the per-replica seeds, the statistics and a
pass/fail verdict. Replica r of a recipe run with master seed s uses the
seed pair ``split(replica_seed(s, tag, 0, r))`` (start, Brownian path).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..dynamics import IntegratorConfig, l0m_rows, run_ensemble
from ..initializers import fixed_correlation, with_latitude
from ..landscape import MixtureSpec, noise_hessian_vector_product, sample_disorder, zero_disorder
from ..signal_oracle import drift_m
from . import io
from .seeds import disorder_seed, replica_seed, split

log = logging.getLogger(__name__)

RECIPES = ("weak_to_strong", "microscopic_start", "stability", "strong_impossible",
           "equatorial_pass_search")


@dataclass
class RecipeResult:
    name: str
    passed: bool
    params: dict
    seeds: list
    stats: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        return {"recipe": self.name, "passed": bool(self.passed), "params": self.params,
                "seeds": self.seeds, "stats": self.stats}

    def to_json(self, path=None) -> str:
        text = io.dumps(self.summary)
        if path is not None:
            io.write_json(path, self.summary)
        return text


def _tag(name):
    return sum(ord(c) for c in name)


def _landscape(N, k, lam, beta, mixture, master, d_index=0, pure_signal=False):
    spec = MixtureSpec(N=N, mixture=dict(mixture), k=k, lam=lam, beta=beta)
    if pure_signal:
        flat = spec.replace(mixture={1: 1.0})
        return flat, zero_disorder(flat), None
    dseed = disorder_seed(master, N, d_index)
    return spec, sample_disorder(spec, dseed), dseed


def _replica_seeds(name, master, n):
    return [split(replica_seed(master, _tag(name), 0, r)) for r in range(n)]


def _starts_at(N, m0, pairs):
    return np.array([fixed_correlation(N, m0, np.random.default_rng(s0)) for s0, _ in pairs])


def _run(spec, disorder, X0, beta, T, pairs, step_h, record_every=0.05):
    cfg = IntegratorConfig(step_h=step_h, horizon_T=T, record_every=record_every, beta=beta)
    return run_ensemble(spec, disorder, X0, cfg, seeds=[s1 for _, s1 in pairs])


def _fractions(values):
    values = np.asarray(values, dtype=bool)
    return int(values.sum()), int(values.size)


def weak_to_strong(N=64, k=3, alpha=1.0, beta=1.0, eps=0.1, T0=1.0, T=20.0, n_replicas=20,
                   mixture=None, seed=0, step_h=None, pass_rate=0.9) -> RecipeResult:
    """Start at m = eps with lam = N^alpha and require min over [T0, T] of m >= 1 - eps."""
    mixture = mixture or {3: 1.0}
    lam = float(N) ** alpha
    spec, d, dseed = _landscape(N, k, lam, beta, mixture, seed)
    pairs = _replica_seeds("weak_to_strong", seed, n_replicas)
    ens = _run(spec, d, _starts_at(N, eps, pairs), beta, T, pairs, step_h)
    wmin = ens.window_min(T0, T)
    hits, total = _fractions(wmin >= 1 - eps)
    return RecipeResult("weak_to_strong", hits >= pass_rate * total,
                        {"N": N, "k": k, "alpha": alpha, "lam": lam, "beta": beta, "eps": eps,
                         "T0": T0, "T": T, "mixture": mixture, "disorder_seed": dseed,
                         "step_h": ens.step_h, "pass_rate": pass_rate},
                        pairs, {"successes": hits, "total": total, "window_min": wmin.tolist()})


def microscopic_radius(lam: float, k: float, gamma: float) -> float:
    """r_N solving lam r_N^{k-1} = gamma."""
    return (gamma / lam) ** (1.0 / (k - 1))


def microscopic_start(N=64, k=3, alpha=1.0, beta=1.0, gamma=4.0, C=1.0, delta=0.5, eta=0.1,
                      T0=1.0, T=20.0, n_replicas=20, mixture=None, seed=0, step_h=None,
                      pass_rate=0.9) -> RecipeResult:
    """Start at the microscopic correlation r_N with lam r_N^{k-1} = gamma; require
    min over [T0, T] of m >= 1 - eta. The scale condition r_N >= C / N^{1-delta} is reported."""
    mixture = mixture or {3: 1.0}
    lam = float(N) ** alpha
    r = microscopic_radius(lam, k, gamma)
    floor = C / float(N) ** (1 - delta)
    if not 0 < r < 1:
        raise ValueError(f"r_N = {r:.4g} is not a valid correlation; raise lam or lower gamma")
    spec, d, dseed = _landscape(N, k, lam, beta, mixture, seed)
    pairs = _replica_seeds("microscopic_start", seed, n_replicas)
    ens = _run(spec, d, _starts_at(N, r, pairs), beta, T, pairs, step_h)
    wmin = ens.window_min(T0, T)
    hits, total = _fractions(wmin >= 1 - eta)
    return RecipeResult("microscopic_start", hits >= pass_rate * total,
                        {"N": N, "k": k, "alpha": alpha, "lam": lam, "beta": beta, "gamma": gamma,
                         "r_N": r, "scale_floor": floor, "scale_condition": r >= floor,
                         "eta": eta, "T0": T0, "T": T, "mixture": mixture, "disorder_seed": dseed,
                         "step_h": ens.step_h, "pass_rate": pass_rate},
                        pairs, {"successes": hits, "total": total, "window_min": wmin.tolist(),
                                "lam_r_pow": lam * r ** (k - 1)})


def stability(N=128, k=3, lam=10.0, beta=1.0, eps=0.2, T=20.0, n_replicas=20, mixture=None,
              seed=0, step_h=None, pass_rate=0.9) -> RecipeResult:
    """Start at m = 2 eps with order-one lam and require inf over [0, T] of m >= eps."""
    mixture = mixture or {2: 1.0}
    spec, d, dseed = _landscape(N, k, lam, beta, mixture, seed)
    pairs = _replica_seeds("stability", seed, n_replicas)
    ens = _run(spec, d, _starts_at(N, 2 * eps, pairs), beta, T, pairs, step_h)
    wmin = ens.window_min(0.0, T)
    hits, total = _fractions(wmin >= eps)
    return RecipeResult("stability", hits >= pass_rate * total,
                        {"N": N, "k": k, "lam": lam, "beta": beta, "eps": eps, "T": T,
                         "mixture": mixture, "disorder_seed": dseed, "step_h": ens.step_h,
                         "pass_rate": pass_rate},
                        pairs, {"successes": hits, "total": total, "window_min": wmin.tolist()})


def signal_plateau(spec: MixtureSpec, lam: float) -> float:
    """Largest zero of the noise-free drift in (0, 1): where m settles at finite beta."""
    f = lambda m: drift_m(m, spec, lam)
    hi = 1.0 - 1e-15
    grid = np.linspace(hi, 1e-6, 20001)
    vals = f(grid)
    idx = np.nonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]
    if idx.size == 0:
        return 0.0
    j = idx[0]
    return float(brentq(f, grid[j + 1], grid[j], xtol=1e-15))


def strong_impossible(N=64, k=3, lam=2.0, beta=1.0, eps=0.01, T0=1.0, T=10.0, n_replicas=20,
                      mixture=None, seed=0, step_h=None, pass_rate=0.9) -> RecipeResult:
    """Start at m = 1 - eps with order-one lam and finite beta; pass when the
    correlation has left [1 - eps, 1] on all of [T0, T] (it relaxes to the plateau)."""
    if math.isinf(beta):
        raise ValueError("the decay near the pole needs finite beta")
    mixture = mixture or {3: 1.0}
    spec, d, dseed = _landscape(N, k, lam, beta, mixture, seed)
    pairs = _replica_seeds("strong_impossible", seed, n_replicas)
    ens = _run(spec, d, _starts_at(N, 1 - eps, pairs), beta, T, pairs, step_h)
    sel = (ens.times >= T0 - 1e-12) & (ens.times <= T + 1e-12)
    wmax = ens.m[sel].max(axis=0)
    hits, total = _fractions(wmax < 1 - eps)
    return RecipeResult("strong_impossible", hits >= pass_rate * total,
                        {"N": N, "k": k, "lam": lam, "beta": beta, "eps": eps, "T0": T0, "T": T,
                         "mixture": mixture, "disorder_seed": dseed, "step_h": ens.step_h,
                         "pass_rate": pass_rate},
                        pairs, {"decayed": hits, "total": total, "window_max": wmax.tolist(),
                                "final_mean": float(ens.m[-1].mean()),
                                "noise_free_plateau": signal_plateau(spec, lam)})


def steer_start(spec, disorder, x, iters=100, rate=0.5):
    """Move x along its latitude to make the first partial of H0 as negative as possible.

    Projected ascent of -d_1 H0 over the coordinates 2..N with x_1 frozen; the
    gradient of d_1 H0 is the noise Hessian applied to e_1.
    """
    N = spec.N
    x = np.array(x, dtype=np.float64)
    x1 = x[0]
    radius = math.sqrt(N - x1 * x1)
    e1 = np.zeros(N)
    e1[0] = 1.0
    y = x[1:].copy()
    for _ in range(iters):
        g = -noise_hessian_vector_product(spec, disorder, x, e1)[1:]
        g -= (g @ y) / (radius * radius) * y
        nrm = np.linalg.norm(g)
        if nrm == 0:
            break
        y = y + rate * radius * g / nrm
        y *= radius / np.linalg.norm(y)
        x[1:] = y
    return x


def equatorial_pass_search(N=128, k=3, lam=1.5, beta=1.0, c=1.0, eps=0.3, T0=15.0, T=20.0,
                           n_candidates=10, mixture=None, seed=0, step_h=None,
                           steer_iters=100) -> RecipeResult:
    """Look for starts with m = c / sqrt(N) that hold m >= eps over [T0, T] at order-one lam.

    Candidates are uniform points at that latitude steered to maximise the
    noise push on x_1; the same number of unsteered points serve as control.
    Pass means at least one steered start recovers and steering beats control.
    """
    mixture = mixture or {3: 1.0}
    spec, d, dseed = _landscape(N, k, lam, beta, mixture, seed)
    pairs = _replica_seeds("equatorial_pass_search", seed, 2 * n_candidates)
    m0 = c / math.sqrt(N)
    control = np.array([with_latitude(N, np.array([m0]), np.random.default_rng(s0))[0]
                        for s0, _ in pairs[n_candidates:]])
    raw = np.array([with_latitude(N, np.array([m0]), np.random.default_rng(s0))[0]
                    for s0, _ in pairs[:n_candidates]])
    steered = np.array([steer_start(spec, d, x, steer_iters) for x in raw])
    X0 = np.ascontiguousarray(np.vstack([steered, control]))
    push = l0m_rows(spec, d, X0, beta)
    ens = _run(spec, d, X0, beta, T, pairs, step_h)
    hit = ens.window_min(T0, T) >= eps
    s_hits, c_hits = int(hit[:n_candidates].sum()), int(hit[n_candidates:].sum())
    return RecipeResult("equatorial_pass_search", s_hits > 0 and s_hits > c_hits,
                        {"N": N, "k": k, "lam": lam, "beta": beta, "m0": m0, "eps": eps, "T0": T0, "T": T,
                         "mixture": mixture, "disorder_seed": dseed, "step_h": ens.step_h,
                         "steer_iters": steer_iters},
                        pairs, {"steered_successes": s_hits, "control_successes": c_hits,
                                "n_candidates": n_candidates,
                                "steered_l0m": push[:n_candidates].tolist(),
                                "control_l0m": push[n_candidates:].tolist()})


def run_recipe(name: str, **params) -> RecipeResult:
    if name not in RECIPES:
        raise ValueError(f"unknown recipe {name!r}; choose from {RECIPES}")
    return globals()[name](**params)
