"""Initial conditions: uniform measures, fixed-correlation slices and MALA samplers for Gibbs measures."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from . import kernels
from .landscape import Disorder, MixtureSpec, check_match, phi

log = logging.getLogger(__name__)

KINDS = ("uniform", "uniform_hemisphere", "fixed_correlation", "gibbs_noise", "banded_gibbs")
LOW_ACCEPTANCE = 0.10


class LowAcceptanceWarning(UserWarning):
    pass


def uniform_sphere(N: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    if N < 2:
        raise ValueError("N must be >= 2")
    g = rng.standard_normal((1 if size is None else size, N))
    x = g * (math.sqrt(N) / np.linalg.norm(g, axis=1, keepdims=True))
    return x[0] if size is None else x


def uniform_hemisphere(N: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    x = uniform_sphere(N, rng, size)
    sign = np.where(x[..., 0] < 0, -1.0, 1.0)
    x[..., 0] *= sign
    return x


def _subsphere(N, radius, rng, size):
    """Uniform points on the sphere of the given radius in the last N-1 coordinates."""
    g = rng.standard_normal((size, N - 1))
    return g * (np.asarray(radius).reshape(-1, 1) / np.linalg.norm(g, axis=1, keepdims=True))


def with_latitude(N: int, m, rng: np.random.Generator) -> np.ndarray:
    """Points with x_1 = m sqrt(N) and the other coordinates uniform on the matching subsphere."""
    m = np.atleast_1d(np.asarray(m, dtype=np.float64))
    x = np.empty((m.size, N))
    x[:, 0] = m * math.sqrt(N)
    x[:, 1:] = _subsphere(N, np.sqrt(N * np.clip(1.0 - m * m, 0.0, None)), rng, m.size)
    return x


def fixed_correlation(N: int, r: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    if not -1 < r < 1:
        raise ValueError("correlation r must lie in (-1, 1)")
    x = with_latitude(N, np.full(1 if size is None else size, float(r)), rng)
    return x[0] if size is None else x


# -- latitude law of the uniform measure ---------------------------------------
# m = x_1/sqrt(N) has density (1 - m^2)^{(N-3)/2} / B(1/2, (N-1)/2) on (-1, 1),
# i.e. m^2 ~ Beta(1/2, (N-1)/2) and 1 - m^2 ~ Beta((N-1)/2, 1/2).

def latitude_logpdf(m, N: int):
    m = np.asarray(m, dtype=np.float64)
    return (N - 3) / 2 * np.log1p(-m * m) - special.betaln(0.5, (N - 1) / 2)


def latitude_cdf(m, N: int):
    m = np.asarray(m, dtype=np.float64)
    tail = 0.5 * special.betainc((N - 1) / 2, 0.5, 1.0 - m * m)
    return np.where(m >= 0, 1.0 - tail, tail)


def _upper_mass(lo, hi, N):
    """P(m in [lo, hi]) for 0 <= lo <= hi, computed through 1 - m^2 for tail accuracy."""
    a, b = (N - 1) / 2, 0.5
    return 0.5 * (special.betainc(a, b, 1.0 - lo * lo) - special.betainc(a, b, 1.0 - hi * hi))


def latitude_mass(lo: float, hi: float, N: int) -> float:
    lo, hi = max(lo, -1.0), min(hi, 1.0)
    if hi <= lo:
        return 0.0
    if lo >= 0:
        return float(_upper_mass(lo, hi, N))
    if hi <= 0:
        return float(_upper_mass(-hi, -lo, N))
    return float(_upper_mass(0.0, hi, N) + _upper_mass(0.0, -lo, N))


def _sample_upper(lo, hi, N, rng, n):
    a, b = (N - 1) / 2, 0.5
    u_hi = special.betainc(a, b, 1.0 - lo * lo)
    u_lo = special.betainc(a, b, 1.0 - hi * hi)
    u = u_lo + (u_hi - u_lo) * rng.random(n)
    w = special.betaincinv(a, b, u)
    return np.clip(np.sqrt(np.clip(1.0 - w, 0.0, 1.0)), lo, hi)


def sample_latitude(N: int, lo: float, hi: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Exact draws of m from the uniform-measure latitude law restricted to [lo, hi]."""
    lo, hi = max(lo, -1.0), min(hi, 1.0)
    if hi <= lo:
        raise ValueError(f"empty latitude window [{lo}, {hi}]")
    if lo >= 0:
        return _sample_upper(lo, hi, N, rng, n)
    if hi <= 0:
        return -_sample_upper(-hi, -lo, N, rng, n)
    p_pos = _upper_mass(0.0, hi, N) / (_upper_mass(0.0, hi, N) + _upper_mass(0.0, -lo, N))
    pos = rng.random(n) < p_pos
    out = np.empty(n)
    out[pos] = _sample_upper(0.0, hi, N, rng, int(pos.sum()))
    out[~pos] = -_sample_upper(0.0, -lo, N, rng, int((~pos).sum()))
    return out


def uniform_window(N: int, lo: float, hi: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Exact samples of the uniform measure conditioned on m in [lo, hi]."""
    return with_latitude(N, sample_latitude(N, lo, hi, rng, n), rng)


# -- MALA on the sphere ---------------------------------------------------------

def _potential(spec, disorder, X, beta, lam):
    """beta H (or beta H0 when lam = 0) and its covariant gradient at rows of X."""
    N = X.shape[1]
    grad, e0 = kernels.total_grad(X, disorder.operator, lam, spec.k, spec.k_is_integer)
    m = X[:, 0] / math.sqrt(N)
    U = beta * (e0 - N * lam * phi(m, spec.k))
    grad = grad - (np.einsum("ri,ri->r", X, grad) / N)[:, None] * X
    return U, beta[:, None] * grad


def mala(spec: MixtureSpec, disorder: Disorder, X, beta, lam, tau: float, n_steps: int,
         rng: np.random.Generator, window=None, flip: bool = False):
    """Metropolis-adjusted Langevin chains on the sphere, one per row of X (updated in place).

    Targets exp(-beta H) with signal strength ``lam`` (per chain allowed). The
    proposal moves along a tangent Gaussian step and projects radially back to
    the sphere; the reverse tangent vector makes the acceptance ratio exact.
    ``window = (lo, hi)`` rejects proposals whose m leaves [lo, hi].
    ``flip`` maps every state with x_1 < 0 to -x, which samples the upper half
    of a target symmetric under x -> -x. Returns the acceptance rate.
    """
    if not (isinstance(X, np.ndarray) and X.flags.c_contiguous and X.dtype == np.float64):
        raise ValueError("chain states must be a C-contiguous float64 array")
    R, N = X.shape
    sqrtN = math.sqrt(N)
    beta = np.broadcast_to(np.asarray(beta, dtype=np.float64), (R,))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (R,)).copy()
    U, G = _potential(spec, disorder, X, beta, lam)
    accepted = 0
    for _ in range(n_steps):
        mu = -tau * G
        z = rng.standard_normal((R, N))
        z -= (np.einsum("ri,ri->r", X, z) / N)[:, None] * X
        v = mu + math.sqrt(2.0 * tau) * z
        Y = X + v
        Y *= (sqrtN / np.linalg.norm(Y, axis=1))[:, None]
        Uy, Gy = _potential(spec, disorder, Y, beta, lam)
        v_rev = (N / np.einsum("ri,ri->r", X, Y))[:, None] * X - Y
        log_a = (U - Uy
                 - np.sum((v_rev + tau * Gy) ** 2, axis=1) / (4.0 * tau)
                 + np.sum((v - mu) ** 2, axis=1) / (4.0 * tau))
        ok = np.log(rng.random(R)) < log_a
        if window is not None:
            my = Y[:, 0] / sqrtN
            ok &= (my >= window[0]) & (my <= window[1])
        ok &= np.isfinite(Uy)
        X[ok] = Y[ok]
        U[ok] = Uy[ok]
        G[ok] = Gy[ok]
        accepted += int(ok.sum())
        if flip:
            neg = X[:, 0] < 0
            if neg.any():
                # U is even, so its gradient changes sign
                X[neg] *= -1.0
                G[neg] *= -1.0
    return accepted / max(1, R * n_steps)


def _warn_acceptance(rate, tau):
    log.info("MALA acceptance rate %.3f at step %.3g", rate, tau)
    if rate < LOW_ACCEPTANCE:
        warnings.warn(f"MALA acceptance rate {rate:.3f} below {LOW_ACCEPTANCE}; "
                      f"try mala_step < {tau / 4:.3g}", LowAcceptanceWarning, stacklevel=3)


@dataclass(frozen=True)
class InitSpec:
    """How to draw starting points. Band half-width is in x_1 units."""

    kind: str = "uniform"
    r: float | None = None
    beta_init: float = 0.0
    band_halfwidth: float | None = None
    burn_in_steps: int = 1000
    mala_step: float = 0.05
    target: str = "pi0"
    seed: int = 0
    max_beta: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown init kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "fixed_correlation" and (self.r is None or not -1 < self.r < 1):
            raise ValueError("fixed_correlation needs r in (-1, 1)")
        if self.kind == "banded_gibbs" and not (self.band_halfwidth and self.band_halfwidth > 0):
            raise ValueError("banded_gibbs needs a positive band_halfwidth")
        if self.burn_in_steps < 0 or not self.mala_step > 0:
            raise ValueError("burn_in_steps must be >= 0 and mala_step > 0")
        if self.target not in ("pi", "pi0"):
            raise ValueError("target must be 'pi' or 'pi0'")


@dataclass
class SampleSet:
    x: np.ndarray
    init: InitSpec
    acceptance: float | None = None
    meta: dict = field(default_factory=dict)

    def save(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i}" for i in range(self.x.shape[1])])
            for row in self.x:
                w.writerow([f"{v:.17g}" for v in row])
        side = {"init": asdict(self.init), "acceptance": self.acceptance, "n": int(self.x.shape[0]),
                "N": int(self.x.shape[1]), **self.meta}
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        x = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        side = json.loads(path.with_suffix(".json").read_text())
        init = InitSpec(**side.pop("init"))
        acc = side.pop("acceptance")
        side.pop("n"), side.pop("N")
        return cls(x, init, acc, side)


def gibbs_noise_sampler(spec: MixtureSpec, disorder: Disorder, init: InitSpec,
                        rng: np.random.Generator, n: int = 1) -> SampleSet:
    """Approximate samples of the pure-noise Gibbs measure conditioned on x_1 > 0."""
    check_match(spec, disorder)
    if init.beta_init > init.max_beta:
        raise ValueError(f"beta_init={init.beta_init} exceeds the high-temperature guard {init.max_beta}")
    X = uniform_hemisphere(spec.N, rng, n)
    if spec.is_even:
        rate = mala(spec, disorder, X, init.beta_init, 0.0, init.mala_step, init.burn_in_steps,
                    rng, flip=True)
    else:
        rate = mala(spec, disorder, X, init.beta_init, 0.0, init.mala_step, init.burn_in_steps,
                    rng, window=(0.0, 1.0))
    _warn_acceptance(rate, init.mala_step)
    return SampleSet(X, init, rate, {"conditioning": "sign-flip" if spec.is_even else "rejection"})


def banded_gibbs_sampler(spec: MixtureSpec, disorder: Disorder, init: InitSpec,
                         rng: np.random.Generator, n: int = 1, lam=None) -> SampleSet:
    """Gibbs measure (pi with the signal, or pi0 without) restricted to |x_1| <= band_halfwidth."""
    check_match(spec, disorder)
    if init.beta_init > init.max_beta:
        raise ValueError(f"beta_init={init.beta_init} exceeds the high-temperature guard {init.max_beta}")
    N = spec.N
    bound = min(init.band_halfwidth / math.sqrt(N), 1.0)
    X = uniform_window(N, -bound, bound, rng, n)
    lam_eff = 0.0 if init.target == "pi0" else (spec.lam if lam is None else lam)
    rate = mala(spec, disorder, X, init.beta_init, lam_eff, init.mala_step, init.burn_in_steps,
                rng, window=(-bound, bound))
    _warn_acceptance(rate, init.mala_step)
    return SampleSet(X, init, rate, {"band_m": bound})


def sample_init(spec: MixtureSpec, disorder: Disorder | None, init: InitSpec, n: int,
                rng: np.random.Generator | None = None) -> SampleSet:
    rng = rng if rng is not None else np.random.default_rng(init.seed)
    N = spec.N
    if init.kind == "uniform":
        return SampleSet(uniform_sphere(N, rng, n), init)
    if init.kind == "uniform_hemisphere":
        return SampleSet(uniform_hemisphere(N, rng, n), init)
    if init.kind == "fixed_correlation":
        return SampleSet(fixed_correlation(N, init.r, rng, n), init)
    if disorder is None:
        raise ValueError(f"{init.kind} needs a disorder")
    if init.kind == "gibbs_noise":
        return gibbs_noise_sampler(spec, disorder, init, rng, n)
    return banded_gibbs_sampler(spec, disorder, init, rng, n)
