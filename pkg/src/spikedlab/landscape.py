"""Spiked random landscape on the sphere of radius sqrt(N).

    H(x) = H0(x) - N * lam * phi(m(x)),    m(x) = x_1 / sqrt(N),

with H0(x) = sum_p a_p N^{-(p-1)/2} <W^(p), x^{(x) p}> built from unsymmetrized
i.i.d. standard Gaussian tensors, so that Cov(H0(x), H0(y)) = N xi((x, y)/N)
with xi(t) = sum_p a_p^2 t^p.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kernels

INFINITY = math.inf
DEFAULT_ENTRY_BUDGET = 2 ** 27
CACHE_ENV = "SPIKEDLAB_CACHE_DIR"

_MAGIC = b"STLD"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")


class SpecError(ValueError):
    pass


class BudgetExceededError(SpecError):
    def __init__(self, p, entries, budget):
        self.p = p
        super().__init__(
            f"dense tensor storage for p={p} needs {entries} entries in total, "
            f"over the budget of {budget}")


class FingerprintMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MixtureSpec:
    """Landscape parameters. ``beta = INFINITY`` selects gradient descent."""

    N: int
    mixture: Mapping[int, float]
    k: float
    lam: float | None = None
    alpha: float | None = None
    beta: float = 1.0
    entry_budget: int = DEFAULT_ENTRY_BUDGET

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise SpecError(f"N must be an integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        terms = {}
        for p, a in dict(self.mixture).items():
            if int(p) != p or p < 1:
                raise SpecError(f"mixture degrees must be integers >= 1, got {p}")
            if not a > 0:
                raise SpecError(f"mixture coefficient a_{p} must be positive, got {a}")
            terms[int(p)] = float(a)
        if not terms:
            raise SpecError("mixture needs at least one term with a_p > 0")
        object.__setattr__(self, "mixture", dict(sorted(terms.items())))
        if self.k < 1:
            raise SpecError(f"signal exponent k must be >= 1, got {self.k}")
        object.__setattr__(self, "k", float(self.k))
        if self.alpha is not None:
            target = float(self.N) ** self.alpha
            if self.lam is None:
                object.__setattr__(self, "lam", target)
            elif abs(self.lam - target) / target >= 1e-12:
                raise SpecError(f"lam={self.lam} inconsistent with N^alpha={target}")
        if self.lam is None:
            object.__setattr__(self, "lam", 0.0)
        if not self.lam >= 0:
            raise SpecError(f"lam must be >= 0, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))
        if not (self.beta >= 0):
            raise SpecError(f"beta must be >= 0 or INFINITY, got {self.beta}")
        object.__setattr__(self, "beta", float(self.beta))
        total = 0
        for p in self.mixture:
            total += self.N ** p
            if total > self.entry_budget:
                raise BudgetExceededError(p, total, self.entry_budget)

    @property
    def is_gd(self) -> bool:
        return math.isinf(self.beta)

    @property
    def k_is_integer(self) -> bool:
        return float(self.k).is_integer()

    def xi(self, t):
        return sum(a * a * np.power(t, p) for p, a in self.mixture.items())

    def xi_prime(self, t):
        return sum(p * a * a * np.power(t, p - 1) for p, a in self.mixture.items())

    @property
    def is_even(self) -> bool:
        return all(p % 2 == 0 for p in self.mixture)

    @property
    def fingerprint(self) -> str:
        text = f"N={self.N};" + ";".join(f"{p}:{a!r}" for p, a in self.mixture.items())
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "MixtureSpec":
        if "lam" in changes and "alpha" not in changes:
            changes["alpha"] = None
        if "N" in changes and "alpha" not in changes and self.alpha is not None:
            changes["lam"] = None
        if "alpha" in changes and "lam" not in changes:
            changes["lam"] = None
        return replace(self, **changes)


@dataclass(frozen=True)
class NoiseOperator:
    """Flat kernel input: per-degree gradient tensors, stored transposed and concatenated."""

    buf: np.ndarray
    offsets: np.ndarray
    ps: np.ndarray
    coefs: np.ndarray


@dataclass(frozen=True, eq=False)
class Disorder:
    """One realization of the noise tensors W^(p)."""

    N: int
    tensors: Mapping[int, np.ndarray]
    seed: int
    spec_fingerprint: str
    mixture: Mapping[int, float] = field(repr=False)

    def __post_init__(self):
        for W in self.tensors.values():
            W.setflags(write=False)

    @cached_property
    def gradient_tensors(self) -> dict:
        """G^(p) = sum over slots s of W^(p) with slot s moved to the front."""
        out = {}
        for p, W in self.tensors.items():
            G = np.zeros_like(W)
            for s in range(p):
                G += np.moveaxis(W, s, 0)
            G.setflags(write=False)
            out[p] = G
        return out

    @cached_property
    def laplacian_tensors(self) -> dict:
        """T^(p) = sum over ordered slot pairs s != t of the (s, t) trace of W^(p); order p-2."""
        out = {}
        for p, W in self.tensors.items():
            if p < 2:
                continue
            T = np.zeros((self.N,) * (p - 2))
            for s in range(p):
                for t in range(p):
                    if s != t:
                        T = T + np.trace(W, axis1=s, axis2=t)
            out[p] = T
        return out

    @cached_property
    def operator(self) -> NoiseOperator:
        N = self.N
        blocks, offsets, ps, coefs = [], [], [], []
        off = 0
        for p, G in self.gradient_tensors.items():
            if p == 1:
                flat = np.ascontiguousarray(G, dtype=np.float64)
            else:
                flat = np.ascontiguousarray(G.reshape(N ** (p - 1), N).T).ravel()
            blocks.append(flat)
            offsets.append(off)
            off += flat.size
            ps.append(p)
            coefs.append(self.mixture[p] * N ** (-(p - 1) / 2))
        return NoiseOperator(
            buf=np.concatenate(blocks),
            offsets=np.asarray(offsets, dtype=np.int64),
            ps=np.asarray(ps, dtype=np.int64),
            coefs=np.asarray(coefs, dtype=np.float64),
        )


def _check_seed(seed):
    if int(seed) != seed or not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an integer in [0, 2^64), got {seed}")
    return int(seed)


def tensor_rng(seed: int, p: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(p,))))


def sample_disorder(spec: MixtureSpec, seed: int) -> Disorder:
    """Draw W^(p) with i.i.d. N(0,1) entries, one independent stream per degree p."""
    seed = _check_seed(seed)
    tensors = {}
    for p in spec.mixture:
        tensors[p] = tensor_rng(seed, p).standard_normal(spec.N ** p).reshape((spec.N,) * p)
    return Disorder(spec.N, tensors, seed, spec.fingerprint, dict(spec.mixture))


def disorder_from_tensors(spec: MixtureSpec, tensors: Mapping[int, np.ndarray], seed: int = 0) -> Disorder:
    """Wrap explicit tensors (tests, cache loads). Must cover exactly the mixture degrees."""
    if set(tensors) != set(spec.mixture):
        raise FingerprintMismatch(f"tensor degrees {sorted(tensors)} != mixture {sorted(spec.mixture)}")
    out = {}
    for p, W in tensors.items():
        W = np.array(W, dtype=np.float64)
        if W.shape != (spec.N,) * p:
            raise ValueError(f"tensor for p={p} has shape {W.shape}, expected {(spec.N,) * p}")
        out[p] = W
    return Disorder(spec.N, out, _check_seed(seed), spec.fingerprint, dict(spec.mixture))


def zero_disorder(spec: MixtureSpec) -> Disorder:
    return disorder_from_tensors(spec, {p: np.zeros((spec.N,) * p) for p in spec.mixture})


def check_match(spec: MixtureSpec, disorder: Disorder):
    if disorder.spec_fingerprint != spec.fingerprint:
        raise FingerprintMismatch(
            f"disorder was sampled for fingerprint {disorder.spec_fingerprint}, "
            f"spec has {spec.fingerprint}")


# -- sphere helpers ---------------------------------------------------------

def correlation(x):
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0] / math.sqrt(x.shape[-1])


def retract(v):
    v = np.asarray(v, dtype=np.float64)
    return v * (math.sqrt(v.shape[-1]) / np.linalg.norm(v, axis=-1, keepdims=True))


def project_tangent(x, g):
    x = np.asarray(x, dtype=np.float64)
    N = x.shape[-1]
    return g - (np.sum(x * g, axis=-1, keepdims=True) / N) * x


def on_sphere(x, tol=1e-9) -> bool:
    x = np.asarray(x, dtype=np.float64)
    N = x.shape[-1]
    return bool(np.all(np.abs(np.sum(x * x, axis=-1) - N) / N <= tol))


# -- signal -------------------------------------------------------------------

def phi(m, k):
    m = np.asarray(m, dtype=np.float64)
    if float(k).is_integer():
        return m ** k
    return np.maximum(m, 0.0) ** k


def phi_prime(m, k):
    m = np.asarray(m, dtype=np.float64)
    if float(k).is_integer():
        return k * m ** (k - 1)
    return np.where(m > 0, k * np.maximum(m, 0.0) ** (k - 1), 0.0)


def phi_second(m, k):
    m = np.asarray(m, dtype=np.float64)
    if k == 1:
        return np.zeros_like(m)
    if float(k).is_integer():
        return k * (k - 1) * m ** (k - 2)
    with np.errstate(divide="ignore"):
        return np.where(m > 0, k * (k - 1) * np.maximum(m, 0.0) ** (k - 2), 0.0)


# -- noise (reference path, literal slot contractions) ----------------------

def _full_contract(W, vectors):
    out = W
    for v in reversed(vectors):
        out = out @ v
    return out


def noise_energy(spec: MixtureSpec, disorder: Disorder, x) -> float:
    check_match(spec, disorder)
    x = np.asarray(x, dtype=np.float64)
    N = spec.N
    total = 0.0
    for p, a in spec.mixture.items():
        total += a * N ** (-(p - 1) / 2) * float(_full_contract(disorder.tensors[p], [x] * p))
    return total


def signal_energy(spec: MixtureSpec, x) -> float:
    return float(-spec.N * spec.lam * phi(correlation(x), spec.k))


def energy(spec: MixtureSpec, disorder: Disorder, x) -> float:
    return noise_energy(spec, disorder, x) + signal_energy(spec, x)


def noise_gradient(spec: MixtureSpec, disorder: Disorder, x) -> np.ndarray:
    """Ambient gradient of H0 as the sum of the p single-slot contractions of each W^(p)."""
    check_match(spec, disorder)
    x = np.asarray(x, dtype=np.float64)
    N = spec.N
    g = np.zeros(N)
    for p, a in spec.mixture.items():
        W = disorder.tensors[p]
        c = a * N ** (-(p - 1) / 2)
        for s in range(p):
            g += c * _slot_free(W, s, x)
    return g


def _slot_free(W, s, x):
    """Contract every slot of W with x except slot s."""
    Ws = np.moveaxis(W, s, 0)
    out = Ws
    for _ in range(W.ndim - 1):
        out = out @ x
    return out


def signal_gradient(spec: MixtureSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros(spec.N)
    g[0] = -math.sqrt(spec.N) * spec.lam * float(phi_prime(correlation(x), spec.k))
    return g


def euclidean_gradient(spec: MixtureSpec, disorder: Disorder, x) -> np.ndarray:
    return noise_gradient(spec, disorder, x) + signal_gradient(spec, x)


def covariant_gradient(spec: MixtureSpec, disorder: Disorder, x) -> np.ndarray:
    return project_tangent(x, euclidean_gradient(spec, disorder, x))


def noise_hessian_vector_product(spec: MixtureSpec, disorder: Disorder, x, v) -> np.ndarray:
    check_match(spec, disorder)
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    N = spec.N
    out = np.zeros(N)
    for p, a in spec.mixture.items():
        if p < 2:
            continue
        c = a * N ** (-(p - 1) / 2)
        W = disorder.tensors[p]
        for s in range(p):
            for t in range(p):
                if t == s:
                    continue
                # free slot s, v in slot t, x elsewhere
                vecs = [v if u == t else x for u in range(p) if u != s]
                out += c * _full_contract(np.moveaxis(W, s, 0), vecs)
    return out


def hessian_vector_product(spec: MixtureSpec, disorder: Disorder, x, v) -> np.ndarray:
    """Ambient second derivative of H at x applied to v."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    out = noise_hessian_vector_product(spec, disorder, x, v)
    out[0] += -spec.lam * float(phi_second(correlation(x), spec.k)) * v[0]
    return out


def noise_components(spec: MixtureSpec, disorder: Disorder, x) -> dict:
    """Per degree p: (H_p, grad H_p, ambient Laplacian of H_p, its gradient), coefficients included."""
    check_match(spec, disorder)
    x = np.asarray(x, dtype=np.float64)
    N = spec.N
    out = {}
    for p, a in spec.mixture.items():
        c = a * N ** (-(p - 1) / 2)
        W = disorder.tensors[p]
        grad = c * sum(_slot_free(W, s, x) for s in range(p))
        value = float(grad @ x) / p
        lap, dlap = 0.0, np.zeros(N)
        if p >= 2:
            T = disorder.laplacian_tensors[p]
            lap = c * float(_full_contract(T, [x] * (p - 2)))
            for s in range(p - 2):
                dlap = dlap + c * _slot_free(T, s, x)
        out[p] = (value, grad, lap, dlap)
    return out


def covariance_oracle(spec: MixtureSpec, q) -> float:
    """N xi(q): the exact covariance of H0 at two points with overlap q."""
    return float(spec.N * spec.xi(q))


# -- batched evaluation through kernels --------------------------------------

def batch_energy_and_gradient(spec: MixtureSpec, disorder: Disorder, X, lam=None):
    """Energies (R,) and ambient gradients (R, N) of the full Hamiltonian at rows of X."""
    check_match(spec, disorder)
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    lam = spec.lam if lam is None else lam
    grad, e0 = kernels.total_grad(X, disorder.operator, lam, spec.k, spec.k_is_integer)
    e = e0 - spec.N * np.broadcast_to(lam, e0.shape) * phi(correlation(X), spec.k)
    return e, grad


# -- cache file ---------------------------------------------------------------

def cache_path(directory, N: int, p: int, seed: int) -> Path:
    return Path(directory) / f"W_N{N}_p{p}_seed{seed}.stld"


def write_tensor(path, W: np.ndarray, p: int, seed: int):
    N = W.shape[0]
    data = np.ascontiguousarray(W, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _FORMAT_VERSION, N, p, seed, data.size))
        fh.write(data.tobytes(order="C"))


def read_tensor(path) -> tuple[np.ndarray, int, int]:
    """Returns (W, p, seed) from a disorder cache file."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, N, p, seed, count = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        if count != N ** p:
            raise ValueError(f"{path}: entry count {count} != N^p = {N ** p}")
        data = np.frombuffer(fh.read(8 * count), dtype="<f8")
        if data.size != count:
            raise ValueError(f"{path}: truncated payload")
    return data.astype(np.float64).reshape((N,) * p), p, seed


def save_disorder(disorder: Disorder, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for p, W in disorder.tensors.items():
        path = cache_path(directory, disorder.N, p, disorder.seed)
        write_tensor(path, W, p, disorder.seed)
        paths.append(path)
    return paths


def load_disorder(spec: MixtureSpec, seed: int, directory) -> Disorder:
    tensors = {}
    for p in spec.mixture:
        W, p_file, seed_file = read_tensor(cache_path(directory, spec.N, p, seed))
        if p_file != p or seed_file != seed:
            raise ValueError(f"cache header mismatch for p={p}, seed={seed}")
        tensors[p] = W
    return disorder_from_tensors(spec, tensors, seed)


def cached_disorder(spec: MixtureSpec, seed: int, directory=None) -> Disorder:
    """Load from the cache directory (``$SPIKEDLAB_CACHE_DIR`` by default) or sample and store."""
    directory = directory or os.environ.get(CACHE_ENV)
    if not directory:
        return sample_disorder(spec, seed)
    if all(cache_path(directory, spec.N, p, seed).exists() for p in spec.mixture):
        return load_disorder(spec, seed, directory)
    disorder = sample_disorder(spec, seed)
    save_disorder(disorder, directory)
    return disorder
