"""Checks of the initial-data regularity conditions on sample sets.

L0 denotes the pure-noise generator: L0 f = Lap f - beta <grad H0, grad f> for
finite beta and -<grad H0, grad f> for gradient descent.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .dynamics import IntegratorConfig, l0m_rows, run_ensemble
from .landscape import Disorder, MixtureSpec, noise_components, noise_hessian_vector_product

EXACT_LEVELS = (1, 2, 3)


def _beta(spec, beta):
    return spec.beta if beta is None else float(beta)


def _dm(x, v):
    """<grad m, v> for an ambient vector v (the tangent projection is built in)."""
    N = x.size
    return (v[0] - x[0] * float(x @ v) / N) / math.sqrt(N)


def _grad_noise(comps):
    return sum(c[1] for c in comps.values())


def l0m_exact(spec: MixtureSpec, disorder: Disorder, x, beta=None) -> float:
    beta = _beta(spec, beta)
    x = np.asarray(x, dtype=np.float64)
    N = x.size
    g = _dm(x, _grad_noise(noise_components(spec, disorder, x)))
    if math.isinf(beta):
        return -g
    return -((N - 1) / N) * x[0] / math.sqrt(N) - beta * g


def l0_squared_m(spec: MixtureSpec, disorder: Disorder, x, beta=None) -> float:
    """L0 applied twice to m, from gradients, Hessian-vector products and Laplacians of H0."""
    beta = _beta(spec, beta)
    x = np.asarray(x, dtype=np.float64)
    N = x.size
    sqN = math.sqrt(N)
    m = x[0] / sqN
    c = (N - 1) / N
    comps = noise_components(spec, disorder, x)
    dH = _grad_noise(comps)
    xdH = float(x @ dH)
    g = (dH[0] - x[0] * xdH / N) / sqN

    # ambient gradient of the extension G(x) = (d_1 H0 - x_1 (x . dH0)/N) / sqrt(N)
    e1 = np.zeros(N)
    e1[0] = 1.0
    He1 = noise_hessian_vector_product(spec, disorder, x, e1)
    Hx = noise_hessian_vector_product(spec, disorder, x, x)
    dG = (He1 - e1 * xdH / N - x[0] * (dH + Hx) / N) / sqN
    proj_dH = dH - (xdH / N) * x
    grad_pair = float(proj_dH @ dG)
    if math.isinf(beta):
        return grad_pair

    # spherical Laplacian of g via the Bochner identity on the radius-sqrt(N) sphere
    lap_s = 0.0
    dlap_s = np.zeros(N)
    for p, (val, grad, lap, dlap) in comps.items():
        shift = p * (p + N - 2) / N
        lap_s += lap - shift * val
        dlap_s += dlap - shift * grad
    lap_g = _dm(x, dlap_s) - c * g - 2.0 * (m / N) * lap_s + 2.0 * ((N - 2) / N) * g
    l0m = -c * m - beta * g
    return -c * l0m - beta * lap_g + beta * beta * grad_pair


def l0_iterates(spec, disorder, x, level, beta=None) -> np.ndarray:
    """(m, L0 m, ..., L0^{level-1} m) at x."""
    if level not in EXACT_LEVELS:
        raise ValueError(f"exact mode supports levels {EXACT_LEVELS}; use the weak level-infinity "
                         f"Monte Carlo check for higher levels")
    x = np.asarray(x, dtype=np.float64)
    vals = [x[0] / math.sqrt(x.size)]
    if level >= 2:
        vals.append(l0m_exact(spec, disorder, x, beta))
    if level >= 3:
        vals.append(l0_squared_m(spec, disorder, x, beta))
    return np.array(vals)


def _pure_noise(spec):
    return spec.replace(lam=0.0)


def semigroup_l0m_path(spec: MixtureSpec, disorder: Disorder, X, T: float, n_replicas: int,
                       seed: int, beta=None, record_every: float = 0.05, step_h=None,
                       chunk: int = 4096):
    """Monte Carlo e^{t L0} L0 m at each start (rows of X) on the recorded grid up to T.

    Returns (times, mean (n_times, S), std_error (n_times, S)). Replicas for
    start s use streams (seed, s * n_replicas + j), so the estimate for a
    start does not depend on which other starts are batched with it.
    """
    if n_replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    beta = _beta(spec, beta)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    S, N = X.shape
    noise_spec = _pure_noise(spec)
    scheme = "euler"
    cfg = IntegratorConfig(step_h=step_h, horizon_T=T, record_every=min(record_every, T) if T > 0 else record_every,
                           beta=beta, seed=seed, scheme=scheme)
    per = max(1, chunk // n_replicas)
    means, ses, times = [], [], None
    for s0 in range(0, S, per):
        block = X[s0:s0 + per]
        starts = np.repeat(block, n_replicas, axis=0)
        seeds = None
        if not math.isinf(beta):
            ss = [np.random.SeedSequence(seed, spawn_key=(s0 * n_replicas + i,))
                  for i in range(starts.shape[0])]
            seeds = [int(q.generate_state(1, np.uint64)[0]) for q in ss]
        ens = run_ensemble(noise_spec, disorder, starts, cfg, observers=("l0m",), seeds=seeds)
        vals = ens.l0m.reshape(len(ens.times), block.shape[0], n_replicas)
        means.append(vals.mean(axis=2))
        ses.append(vals.std(axis=2, ddof=1) / math.sqrt(n_replicas))
        times = ens.times
    return times, np.concatenate(means, axis=1), np.concatenate(ses, axis=1)


def semigroup_l0m_estimate(spec: MixtureSpec, disorder: Disorder, x, t: float, n_replicas: int,
                           seed: int = 0, beta=None, step_h=None):
    """(mean, std_error) of e^{t L0} L0 m(x) = E[L0 m(X_t)] over pure-noise trajectories from x."""
    if n_replicas < 100:
        raise ValueError("n_replicas must be at least 100")
    if t == 0:
        v = float(l0m_rows(spec, disorder, np.asarray(x)[None, :], _beta(spec, beta))[0])
        return v, 0.0
    times, mean, se = semigroup_l0m_path(spec, disorder, np.asarray(x)[None, :], t, n_replicas,
                                         seed, beta, record_every=t, step_h=step_h)
    return float(mean[-1, 0]), float(se[-1, 0])


def generator_estimate(spec: MixtureSpec, disorder: Disorder, x, observable: str = "m",
                       h: float = 1e-6, n_pairs: int = 50_000, seed: int = 0, beta=None):
    """(mean, std_error) of (E f(X_h) - f(x)) / h for one pure-noise Langevin step from x.

    f is m (estimates L0 m) or L0 m (estimates L0^2 m). Steps are taken in
    antithetic pairs +-zeta, which cancels the first- and third-order noise
    terms, so the estimate has O(h) bias and O(1) variance per pair.
    """
    beta = _beta(spec, beta)
    if math.isinf(beta):
        raise ValueError("the Monte Carlo generator estimate needs finite beta")
    if observable not in ("m", "l0m"):
        raise ValueError("observable must be 'm' or 'l0m'")
    x = np.asarray(x, dtype=np.float64)
    N = x.size
    noise_spec = _pure_noise(spec)

    def f(Y):
        return Y[:, 0] / math.sqrt(N) if observable == "m" else l0m_rows(noise_spec, disorder, Y, beta)

    f0 = float(f(x[None, :])[0])
    rng = np.random.default_rng(seed)
    lam = np.zeros(1)
    vals = []
    for start in range(0, n_pairs, 4096):
        n = min(4096, n_pairs - start)
        z = rng.standard_normal((n, N))
        noise = np.concatenate([z, -z])[None, :, :]
        X = np.ascontiguousarray(np.repeat(x[None, :], 2 * n, axis=0))
        kernels.integrate(X, disorder.operator, np.broadcast_to(lam, (2 * n,)).copy(), spec.k,
                          spec.k_is_integer, beta, h, 1, kernels.LANGEVIN, noise)
        fy = f(X)
        vals.append((0.5 * (fy[:n] + fy[n:]) - f0) / h)
    v = np.concatenate(vals)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class ConditionReport:
    level: object
    delta: float
    N: int
    threshold: float
    fraction_violating: float
    values: list
    mc_std_error: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        frac = float(np.mean(vals > self.threshold)) if vals.size else 0.0
        if abs(frac - self.fraction_violating) > 1e-12:
            raise ValueError("fraction_violating inconsistent with per-sample values")

    def to_json(self, path=None) -> str:
        d = asdict(self)
        d["values"] = [float(v) for v in self.values]
        text = json.dumps(d, indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def condition_threshold(N, delta):
    return N ** (-0.5 + delta)


def condition1_check(samples, spec: MixtureSpec, disorder: Disorder, level, delta: float,
                     T: float | None = None, beta=None, n_replicas: int = 100, seed: int = 0,
                     record_every: float = 0.05, step_h=None) -> ConditionReport:
    """Fraction of samples outside E_{n,delta,N} (exact levels) or outside the weak level-infinity set.

    Per-sample value is max_l |L0^l m| over l < level for exact levels, and
    sup over the recorded grid of |e^{t L0} L0 m| for ``level="weak_infty"``.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    N = X.shape[1]
    thr = condition_threshold(N, delta)
    if level == "weak_infty":
        if T is None:
            raise ValueError("the weak level-infinity check needs a horizon T")
        times, mean, se = semigroup_l0m_path(spec, disorder, X, T, n_replicas, seed, beta,
                                             record_every, step_h)
        vals = np.abs(mean).max(axis=0)
        frac = float(np.mean(vals > thr))
        return ConditionReport("weak_infty", delta, N, thr, frac, vals.tolist(),
                               float(se.max()), {"T": T, "n_replicas": n_replicas,
                                                 "grid_spacing": record_every})
    if level not in EXACT_LEVELS:
        raise ValueError(f"exact mode supports levels {EXACT_LEVELS}; use level='weak_infty' instead")
    vals = np.array([np.abs(l0_iterates(spec, disorder, x, level, beta)).max() for x in X])
    return ConditionReport(level, delta, N, thr, float(np.mean(vals > thr)), vals.tolist())


def condition2_check(samples, epsilons) -> dict:
    """Curve eps -> fraction of samples with x_1 < eps (x_1 in sphere coordinates of radius sqrt(N))."""
    x1 = np.atleast_2d(np.asarray(samples, dtype=np.float64))[:, 0]
    return {float(e): float(np.mean(x1 < e)) for e in epsilons}


def condition2_prime_fraction(samples, delta: float) -> float:
    """Fraction of samples with x_1 <= N^{-delta}."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    return float(np.mean(X[:, 0] <= X.shape[1] ** (-delta)))
