"""Spiked tensor observations and tensor power iteration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .landscape import read_tensor, tensor_rng, write_tensor


@dataclass(frozen=True, eq=False)
class SpikedTensor:
    """Y = sqrt(N) lam e1^{(x) k} + W with W i.i.d. standard Gaussian (same stream as the disorder)."""

    N: int
    k: int
    lam: float
    seed: int
    Y: np.ndarray

    @classmethod
    def sample(cls, N: int, k: int, lam: float, seed: int) -> "SpikedTensor":
        if int(k) != k or k < 2:
            raise ValueError("tensor order k must be an integer >= 2")
        k = int(k)
        W = tensor_rng(seed, k).standard_normal(N ** k).reshape((N,) * k)
        Y = W.copy()
        Y[(0,) * k] += math.sqrt(N) * lam
        Y.setflags(write=False)
        return cls(N, k, float(lam), int(seed), Y)

    @property
    def noise(self) -> np.ndarray:
        W = np.array(self.Y)
        W[(0,) * self.k] -= math.sqrt(self.N) * self.lam
        return W

    def save_noise(self, path):
        write_tensor(path, self.noise, self.k, self.seed)

    @classmethod
    def from_noise_file(cls, path, lam: float) -> "SpikedTensor":
        W, k, seed = read_tensor(path)
        N = W.shape[0]
        W[(0,) * k] += math.sqrt(N) * lam
        W.setflags(write=False)
        return cls(N, k, float(lam), seed, W)


def combine_observations(tensors) -> np.ndarray:
    """sqrt(M) times the mean of M observations: one observation at signal strength sqrt(M) lam."""
    tensors = [np.asarray(t) for t in tensors]
    return np.sum(tensors, axis=0) / math.sqrt(len(tensors))


def _contract_all_but_last(Y, x):
    out = Y
    for _ in range(Y.ndim - 1):
        out = np.tensordot(x, out, axes=(0, 0))
    return out


@dataclass
class PowerIterationResult:
    x: np.ndarray
    overlaps: np.ndarray
    restarts: int


def tensor_power_iteration(Y, x0, iters: int, rng: np.random.Generator | None = None,
                           spike=None) -> PowerIterationResult:
    """x <- Y[x, ..., x, .] / |Y[x, ..., x, .]|, tracking the overlap with the spike (default e1)."""
    Y = np.asarray(Y, dtype=np.float64)
    N = Y.shape[0]
    x = np.asarray(x0, dtype=np.float64)
    if abs(np.linalg.norm(x) - 1.0) > 1e-9:
        raise ValueError("x0 must be a unit vector")
    v = np.eye(N)[0] if spike is None else np.asarray(spike, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    overlaps = [float(x @ v)]
    restarts = 0
    for _ in range(iters):
        y = _contract_all_but_last(Y, x)
        nrm = np.linalg.norm(y)
        if not nrm > 0 or not np.isfinite(nrm):
            restarts += 1
            y = rng.standard_normal(N)
            nrm = np.linalg.norm(y)
        x = y / nrm
        overlaps.append(float(x @ v))
    return PowerIterationResult(x, np.array(overlaps), restarts)


def power_iteration_trials(N: int, k: int, lam: float, n_trials: int, iters: int, seed: int,
                           n_obs: int = 1) -> np.ndarray:
    """Final |overlap| over independent trials, each with fresh noise and a uniform random start."""
    out = np.empty(n_trials)
    for t in range(n_trials):
        ss = np.random.SeedSequence(seed, spawn_key=(t,))
        s_noise, s_init = (int(q.generate_state(1, np.uint64)[0]) for q in ss.spawn(2))
        obs = [SpikedTensor.sample(N, k, lam, s_noise + j).Y for j in range(n_obs)]
        Y = obs[0] if n_obs == 1 else combine_observations(obs)
        rng = np.random.default_rng(s_init)
        x0 = rng.standard_normal(N)
        res = tensor_power_iteration(Y, x0 / np.linalg.norm(x0), iters, rng)
        out[t] = abs(res.overlaps[-1])
    return out
