"""Projected Euler-Maruyama Langevin dynamics and gradient descent on the sphere."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .landscape import (Disorder, MixtureSpec, check_match, correlation, phi,
                        retract)

SCHEMES = ("euler", "rk4")
OBSERVABLES = ("l0m", "gradnorm")
_NOISE_BLOCK = 256


class TrajectoryAborted(RuntimeError):
    def __init__(self, step, time, reason):
        self.step = step
        self.time = time
        super().__init__(f"trajectory aborted at step {step} (t={time:.6g}): {reason}")


class IllPosedStart(ValueError):
    pass


def default_step(spec: MixtureSpec, beta=None, lam=None) -> float:
    beta = spec.beta if beta is None else beta
    lam = spec.lam if lam is None else lam
    drive = lam * spec.k if math.isinf(beta) else beta * lam * spec.k
    return min(1e-3, 1e-2 / (drive + 1.0))


@dataclass(frozen=True)
class IntegratorConfig:
    """Time grid and scheme. ``step_h=None`` picks the default step for the spec."""

    step_h: float | None = None
    horizon_T: float = 20.0
    record_every: float = 0.05
    beta: float | None = None
    seed: int = 0
    scheme: str = "euler"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.horizon_T < 0:
            raise ValueError("horizon_T must be >= 0")
        if not self.record_every > 0:
            raise ValueError("record_every must be positive")
        if self.step_h is not None:
            if not self.step_h > 0:
                raise ValueError("step_h must be positive")
            if self.step_h > self.record_every:
                raise ValueError("step_h must not exceed record_every")
        if self.horizon_T > 0 and self.record_every > self.horizon_T:
            raise ValueError("record_every must not exceed horizon_T")
        if self.scheme == "rk4" and self.beta is not None and not math.isinf(self.beta):
            raise ValueError("rk4 is only available for gradient descent (beta = INFINITY)")

    def resolve(self, spec: MixtureSpec, lam=None):
        """Effective (beta, h, substeps per record, number of records after t=0)."""
        beta = spec.beta if self.beta is None else float(self.beta)
        if self.scheme == "rk4" and not math.isinf(beta):
            raise ValueError("rk4 is only available for gradient descent (beta = INFINITY)")
        lam_max = float(np.max(lam)) if lam is not None else spec.lam
        h = self.step_h if self.step_h is not None else default_step(spec, beta, lam_max)
        h = min(h, self.record_every)
        sub = max(1, math.ceil(self.record_every / h - 1e-9))
        n_rec = int(math.floor(self.horizon_T / self.record_every + 1e-9))
        return beta, self.record_every / sub, sub, n_rec


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    m_series: np.ndarray
    energy_series: np.ndarray
    l0m_series: np.ndarray | None = None
    gradnorm_series: np.ndarray | None = None
    hitting: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for s in (self.m_series, self.energy_series, self.l0m_series, self.gradnorm_series):
            if s is not None and len(s) != n:
                raise ValueError("series lengths differ")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def hitting_time(self, eps):
        return hitting_time(self, eps)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "m", "energy", "l0m", "gradnorm"])
            for i, t in enumerate(self.times):
                row = [t, self.m_series[i], self.energy_series[i]]
                row.append("" if self.l0m_series is None else self.l0m_series[i])
                row.append("" if self.gradnorm_series is None else self.gradnorm_series[i])
                w.writerow([v if v == "" else f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path):
        cols = {"t": [], "m": [], "energy": [], "l0m": [], "gradnorm": []}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                for key in cols:
                    cols[key].append(float(row[key]) if row[key] != "" else None)

        def opt(v):
            return None if not v or v[0] is None else np.array(v)

        return cls(np.array(cols["t"]), np.array(cols["m"]), np.array(cols["energy"]),
                   opt(cols["l0m"]), opt(cols["gradnorm"]))


@dataclass
class EnsembleRecord:
    """Observables of R replicas on a shared time grid; series have shape (n_times, R)."""

    times: np.ndarray
    m: np.ndarray
    energy: np.ndarray
    final: np.ndarray
    l0m: np.ndarray | None = None
    gradnorm: np.ndarray | None = None
    seeds: tuple = ()
    step_h: float = 0.0
    stopped_early: bool = False

    @property
    def n_replicas(self) -> int:
        return self.m.shape[1]

    def replica(self, r: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            self.times.copy(), self.m[:, r].copy(), self.energy[:, r].copy(),
            None if self.l0m is None else self.l0m[:, r].copy(),
            None if self.gradnorm is None else self.gradnorm[:, r].copy())

    def window_min(self, t0: float, t1: float) -> np.ndarray:
        mask = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        if not mask.any():
            raise ValueError(f"no recorded times in [{t0}, {t1}]")
        return self.m[mask].min(axis=0)

    def hitting_times(self, eps: float) -> np.ndarray:
        """First recorded time with m >= eps per replica, NaN if never."""
        return _first_time(self.times, self.m >= eps)

    def exit_times(self, bound: float) -> np.ndarray:
        """First recorded time with |x_1| >= bound per replica (bound in x_1 units), NaN if never."""
        N = self.final.shape[1]
        return _first_time(self.times, np.abs(self.m) * math.sqrt(N) >= bound)


def _first_time(times, hit):
    any_hit = hit.any(axis=0)
    first = np.argmax(hit, axis=0)
    return np.where(any_hit, times[first], np.nan)


def hitting_time(record: TrajectoryRecord, eps: float):
    """One-sided first passage of m above eps on the recorded grid; None if never."""
    if len(record.times) == 0:
        raise ValueError("empty record")
    idx = np.flatnonzero(np.asarray(record.m_series) >= eps)
    return float(record.times[idx[0]]) if idx.size else None


def replica_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _check_start(spec, beta, X):
    if math.isinf(beta) and not spec.k_is_integer and 1 < spec.k < 2:
        if np.any(correlation(X) <= 0):
            raise IllPosedStart(
                f"gradient flow with non-integer k={spec.k} in (1, 2) is ill-posed from m <= 0")


def _observe(spec, disorder, X, lam, beta, want):
    """Energy, optional L0 m and optional covariant gradient norm at rows of X."""
    N = spec.N
    grad, e0 = kernels.total_grad(X, disorder.operator, lam, spec.k, spec.k_is_integer)
    m = X[:, 0] / math.sqrt(N)
    energy = e0 - N * lam * phi(m, spec.k)
    l0m = gnorm = None
    if "gradnorm" in want:
        tang = grad - (np.einsum("ri,ri->r", X, grad) / N)[:, None] * X
        gnorm = np.linalg.norm(tang, axis=1)
    if "l0m" in want:
        l0m = l0m_rows(spec, disorder, X, beta)
    return energy, l0m, gnorm


def l0m_rows(spec: MixtureSpec, disorder: Disorder, X, beta) -> np.ndarray:
    """L0 m at each row of X through the batched kernel."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    N = X.shape[1]
    g0, _ = kernels.noise_grad_energy(X, disorder.operator)
    xg = np.einsum("ri,ri->r", X, g0)
    drift = (g0[:, 0] - X[:, 0] * xg / N) / math.sqrt(N)
    if math.isinf(beta):
        return -drift
    return -((N - 1) / N) * X[:, 0] / math.sqrt(N) - beta * drift


def run_ensemble(spec: MixtureSpec, disorder: Disorder, X0, config: IntegratorConfig,
                 observers: Iterable[str] = (), lam=None, seeds: Sequence[int] | None = None,
                 stop: Callable[[float, np.ndarray], bool] | None = None) -> EnsembleRecord:
    """Integrate R replicas from the rows of X0.

    Replica r draws its Brownian increments from its own stream, seeded by
    ``seeds[r]`` or by (config.seed, r), so the output does not depend on how
    replicas are grouped. ``stop(t, X)`` is polled at record times.
    """
    check_match(spec, disorder)
    want = set(observers)
    unknown = want - set(OBSERVABLES)
    if unknown:
        raise ValueError(f"unknown observers {sorted(unknown)}")
    X = np.array(np.atleast_2d(X0), dtype=np.float64, order="C")
    R, N = X.shape
    if N != spec.N:
        raise ValueError(f"state dimension {N} != spec.N {spec.N}")
    X = retract(X)
    X = np.ascontiguousarray(X)
    lam_arr = np.broadcast_to(spec.lam if lam is None else np.asarray(lam, dtype=np.float64), (R,)).copy()
    beta, h, sub, n_rec = config.resolve(spec, lam_arr)
    _check_start(spec, beta, X)
    gd = math.isinf(beta)
    scheme = kernels.GD_RK4 if config.scheme == "rk4" else (kernels.GD_EULER if gd else kernels.LANGEVIN)
    if seeds is None:
        rngs = [replica_rng(config.seed, r) for r in range(R)] if not gd else []
        seeds = tuple((config.seed, r) for r in range(R))
    else:
        if len(seeds) != R:
            raise ValueError("need one seed per replica")
        rngs = [np.random.Generator(np.random.PCG64(int(s))) for s in seeds] if not gd else []
        seeds = tuple(int(s) for s in seeds)

    times = [0.0]
    ms = [X[:, 0] / math.sqrt(N)]
    e, l, g = _observe(spec, disorder, X, lam_arr, beta, want)
    es, ls, gs = [e], [l], [g]
    noise = np.empty((0, R, N)) if gd else None
    stopped = False
    for j in range(1, n_rec + 1):
        done = 0
        while done < sub:
            n = min(_NOISE_BLOCK, sub - done)
            if not gd:
                noise = np.empty((n, R, N))
                for r, rng in enumerate(rngs):
                    noise[:, r, :] = rng.standard_normal((n, N))
            bad = kernels.integrate(X, disorder.operator, lam_arr, spec.k, spec.k_is_integer,
                                    beta if not gd else 0.0, h, n, scheme, noise)
            if bad >= 0:
                step = (j - 1) * sub + done + bad
                raise TrajectoryAborted(step, step * h, "non-finite state or gradient")
            done += n
        t = j * config.record_every
        times.append(t)
        ms.append(X[:, 0] / math.sqrt(N))
        e, l, g = _observe(spec, disorder, X, lam_arr, beta, want)
        if not np.all(np.isfinite(e)):
            raise TrajectoryAborted(j * sub, t, "non-finite energy")
        es.append(e)
        ls.append(l)
        gs.append(g)
        if stop is not None and stop(t, X):
            stopped = j < n_rec
            break
    return EnsembleRecord(
        times=np.array(times), m=np.clip(np.array(ms), -1.0, 1.0), energy=np.array(es), final=X,
        l0m=np.array(ls) if "l0m" in want else None,
        gradnorm=np.array(gs) if "gradnorm" in want else None,
        seeds=seeds, step_h=h, stopped_early=stopped)


def run_trajectory(spec: MixtureSpec, disorder: Disorder, init, config: IntegratorConfig,
                   observers: Iterable[str] = (), thresholds: Iterable[float] = ()) -> TrajectoryRecord:
    ens = run_ensemble(spec, disorder, np.asarray(init)[None, :], config, observers)
    rec = ens.replica(0)
    rec.hitting = {float(eps): hitting_time(rec, eps) for eps in thresholds}
    return rec


def langevin_step(x, spec: MixtureSpec, disorder: Disorder, h: float, rng=None, zeta=None, beta=None):
    """One projected Euler-Maruyama step; ``zeta`` overrides the Gaussian draw."""
    beta = spec.beta if beta is None else beta
    if math.isinf(beta):
        raise ValueError("langevin_step needs finite beta; use gd_step")
    if not h > 0:
        raise ValueError("h must be positive")
    X = np.ascontiguousarray(np.asarray(x, dtype=np.float64)[None, :].copy())
    if zeta is None:
        zeta = rng.standard_normal(spec.N)
    noise = np.asarray(zeta, dtype=np.float64).reshape(1, 1, spec.N)
    bad = kernels.integrate(X, disorder.operator, spec.lam, spec.k, spec.k_is_integer,
                            beta, h, 1, kernels.LANGEVIN, noise)
    if bad >= 0:
        raise TrajectoryAborted(0, 0.0, "non-finite gradient")
    return X[0]


def gd_step(x, spec: MixtureSpec, disorder: Disorder, h: float, scheme: str = "euler"):
    """One retracted gradient-descent step of dx/dt = -grad H."""
    if not h > 0:
        raise ValueError("h must be positive")
    X = np.ascontiguousarray(np.asarray(x, dtype=np.float64)[None, :].copy())
    _check_start(spec, math.inf, X)
    code = kernels.GD_RK4 if scheme == "rk4" else kernels.GD_EULER
    bad = kernels.integrate(X, disorder.operator, spec.lam, spec.k, spec.k_is_integer,
                            0.0, h, 1, code)
    if bad >= 0:
        raise TrajectoryAborted(0, 0.0, "non-finite gradient")
    return X[0]
