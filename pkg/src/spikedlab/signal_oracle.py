"""Noise-free reference quantities: effective potential, correlation drift, comparison bounds, thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .landscape import MixtureSpec, phi, phi_prime

INF_KEY = "inf"


def effective_potential(m, beta, lam, k):
    """V(m) = beta lam m^k + log(1 - m^2) / 2 for |m| < 1."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(np.abs(m) >= 1):
        raise ValueError("effective potential is defined only for |m| < 1")
    out = beta * lam * phi(m, k) + 0.5 * np.log1p(-m * m)
    return out if out.ndim else float(out)


def effective_potential_prime(m, beta, lam, k):
    m = np.asarray(m, dtype=np.float64)
    out = beta * lam * phi_prime(m, k) - m / (1.0 - m * m)
    return out if out.ndim else float(out)


def drift_m(m, spec: MixtureSpec, lam=None, simplified: bool = False):
    """Deterministic drift of m with H0 = 0.

    Finite beta: beta lam phi'(m)(1 - m^2) - (N-1)/N m. Gradient descent
    absorbs beta and has no Laplacian term. ``simplified`` drops the
    (1 - m^2) factor and the Laplacian, leaving the bare power law.
    """
    lam = spec.lam if lam is None else lam
    m = np.asarray(m, dtype=np.float64)
    gd = spec.is_gd
    drive = lam * phi_prime(m, spec.k) * (1.0 if gd else spec.beta)
    if simplified:
        out = drive
    else:
        out = drive * (1.0 - m * m)
        if not gd:
            out = out - (spec.N - 1) / spec.N * m
    return out if out.ndim else float(out)


def unstable_fixed_point(spec: MixtureSpec, lam=None) -> float:
    """Smallest positive root of drift_m (finite beta, k > 2); the escape barrier in m."""
    lam = spec.lam if lam is None else lam
    if spec.is_gd or spec.k <= 2:
        raise ValueError("a positive unstable fixed point needs finite beta and k > 2")
    guess = (1.0 / (spec.beta * lam * spec.k)) ** (1.0 / (spec.k - 2))
    f = lambda m: drift_m(m, spec, lam)
    grid = np.linspace(1e-9, 1 - 1e-9, 4001)
    vals = f(grid)
    up = np.flatnonzero((vals[:-1] < 0) & (vals[1:] > 0))
    if not up.size:
        raise ValueError(f"no sign change found (heuristic estimate {guess:.4g})")
    i = up[0]
    return float(brentq(f, grid[i], grid[i + 1], xtol=1e-14))


@dataclass
class ODESolution:
    """Dense solution of the correlation ODE. Values after a terminal event are held constant."""

    sol: object
    t_end: float
    m_end: float
    event_time: float | None

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = np.clip(t, 0.0, self.t_end)
        out = np.where(t <= self.t_end, self.sol(inside).reshape(inside.shape), self.m_end)
        return out if out.ndim else float(out)


def solve_pure_signal_ode(m0: float, spec: MixtureSpec, T: float, lam=None,
                          simplified: bool = False, rtol: float = 1e-10, atol: float = 1e-12,
                          clamp: float = 1.0 - 1e-12) -> ODESolution:
    """Solve dm/dt = drift_m(m) on [0, T] with DOP853; stops at |m| = clamp."""
    if not -1 < m0 < 1:
        raise ValueError("m0 must lie in (-1, 1)")

    def rhs(t, y):
        return [drift_m(min(max(y[0], -1.0), 1.0), spec, lam, simplified)]

    def hit(t, y):
        return abs(y[0]) - clamp
    hit.terminal = True

    if T == 0:
        res = solve_ivp(rhs, (0.0, 1e-300), [m0], method="DOP853", dense_output=True)
        return ODESolution(res.sol, 0.0, m0, None)
    res = solve_ivp(rhs, (0.0, T), [m0], method="DOP853", dense_output=True,
                    rtol=rtol, atol=atol, events=hit)
    ev = res.t_events[0]
    t_ev = float(ev[0]) if len(ev) else None
    return ODESolution(res.sol, float(res.t[-1]), float(res.y[0, -1]), t_ev)


def _check_power_args(a, c, gamma):
    if not (a > 0 and c > 0 and gamma > 0):
        raise ValueError("need a > 0, c > 0, gamma > 0")
    if gamma == 1:
        raise ValueError("gamma = 1 is the linear case; use Gronwall's inequality instead")


def blowup_time(a: float, c: float, gamma: float) -> float:
    """t** = 1 / ((gamma - 1) c a^(gamma - 1)); infinite for gamma < 1."""
    _check_power_args(a, c, gamma)
    if gamma < 1:
        return math.inf
    return 1.0 / ((gamma - 1.0) * c * a ** (gamma - 1.0))


def power_law_bound(a: float, c: float, gamma: float, t):
    """a (1 - (gamma-1) c a^(gamma-1) t)^(-1/(gamma-1)): solution of h' = c h^gamma, h(0) = a."""
    _check_power_args(a, c, gamma)
    t = np.asarray(t, dtype=np.float64)
    if gamma > 1 and np.any(t >= blowup_time(a, c, gamma)):
        raise ValueError("t must be below the blow-up time")
    base = 1.0 - (gamma - 1.0) * c * a ** (gamma - 1.0) * t
    out = a * base ** (-1.0 / (gamma - 1.0))
    return out if out.ndim else float(out)


def integrate_power_law(a: float, c: float, gamma: float, t_max: float, tail: float = 1e-9,
                        rtol: float = 1e-12):
    """Numerically integrate h' = c h^gamma from h(0) = a.

    Works in u = log h (u' = c e^{(gamma-1)u}). For gamma > 1 a terminal event
    fires once h is so large that the remaining time to divergence is at most
    ``tail`` relative, which locates the blow-up time.
    Returns (dense solution in h, event time or None).
    """
    def rhs(t, u):
        return [c * math.exp((gamma - 1.0) * u[0])]

    events = None
    if gamma > 1:
        u_cap = math.log(a) + math.log(1.0 / tail) / (gamma - 1.0)

        def big(t, u):
            return u[0] - u_cap
        big.terminal = True
        events = big

    res = solve_ivp(rhs, (0.0, t_max), [math.log(a)], method="DOP853", dense_output=True,
                    rtol=rtol, atol=1e-14, events=events)
    t_ev = None
    if events is not None and len(res.t_events[0]):
        t_ev = float(res.t_events[0][0])
    return (lambda t: np.exp(res.sol(t)[0])), t_ev


@dataclass(frozen=True)
class ThresholdTable:
    k: float
    alpha_c: dict
    k_c: dict


def alpha_c(k, n):
    if n == INF_KEY or n == math.inf:
        return (k - 2) / 2
    return (k - 1) / 2 - (n - 1) / (2 * n)


def k_c(n):
    if n == INF_KEY or n == math.inf:
        return 2.0
    return 2 - 1 / n


def threshold_table(k: float, n_max: int = 5) -> ThresholdTable:
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    keys = list(range(1, n_max + 1))
    if float(k).is_integer():
        ac = {n: float(Fraction(int(k) - 1, 2) - Fraction(n - 1, 2 * n)) for n in keys}
    else:
        ac = {n: alpha_c(k, n) for n in keys}
    ac[INF_KEY] = alpha_c(k, INF_KEY)
    kc = {n: float(2 - Fraction(1, n)) for n in keys}
    kc[INF_KEY] = 2.0
    return ThresholdTable(float(k), ac, kc)


def pure_signal_lambda_c(spec: MixtureSpec, T: float, threshold: float, m0: float | None = None,
                         window_start: float | None = None) -> float:
    """Smallest lam for which the noise-free gradient flow from m0 = N^{-1/2} reaches
    ``threshold`` by ``window_start`` (default T) and stays there up to T.
    """
    m0 = 1.0 / math.sqrt(spec.N) if m0 is None else m0
    t_hit = T if window_start is None else window_start

    def margin(loglam):
        sol = solve_pure_signal_ode(m0, spec, T, lam=math.exp(loglam))
        return float(sol(t_hit)) - threshold

    lo, hi = math.log(1e-3), math.log(1e3)
    while margin(lo) > 0:
        lo -= 2.0
    while margin(hi) < 0:
        hi += 2.0
    return math.exp(brentq(margin, lo, hi, xtol=1e-10))
