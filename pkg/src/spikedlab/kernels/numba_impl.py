"""numba-compiled kernels mirroring :mod:`numpy_impl` operation for operation.

The time loop, projections, retraction and signal term are fused; the leading
tensor contraction still goes through ``np.dot`` (BLAS) inside the jitted code.
"""

import math

import numpy as np
from numba import njit

LANGEVIN = 0
GD_EULER = 1
GD_RK4 = 2


@njit(cache=True)
def _contract_into(X, block, p, out, scale):
    R, N = X.shape
    if p == 1:
        for r in range(R):
            for i in range(N):
                out[r, i] += scale * block[i]
        return
    M = N ** (p - 1)
    cur = np.dot(X, block.reshape((N, M)))
    size = M
    for _ in range(p - 2):
        nxt = np.empty((R, size // N))
        for r in range(R):
            for b in range(size // N):
                acc = 0.0
                base = b * N
                for j in range(N):
                    acc += cur[r, base + j] * X[r, j]
                nxt[r, b] = acc
        cur = nxt
        size = size // N
    for r in range(R):
        for i in range(N):
            out[r, i] += scale * cur[r, i]


@njit(cache=True)
def noise_grad_energy(X, buf, offsets, ps, coefs):
    R, N = X.shape
    grad = np.zeros((R, N))
    energy = np.zeros(R)
    tmp = np.empty((R, N))
    for t in range(ps.shape[0]):
        p = ps[t]
        size = N ** p
        block = buf[offsets[t]:offsets[t] + size]
        tmp[:, :] = 0.0
        _contract_into(X, block, p, tmp, 1.0)
        c = coefs[t]
        for r in range(R):
            acc = 0.0
            for i in range(N):
                grad[r, i] += c * tmp[r, i]
                acc += tmp[r, i] * X[r, i]
            energy[r] += c / p * acc
    return grad, energy


@njit(cache=True)
def _dphi(m, k, kint):
    if kint:
        return k * m ** (k - 1.0)
    if m > 0.0:
        return k * m ** (k - 1.0)
    return 0.0


@njit(cache=True)
def total_grad(X, lam, buf, offsets, ps, coefs, k, kint):
    grad, e0 = noise_grad_energy(X, buf, offsets, ps, coefs)
    R, N = X.shape
    sqrtN = math.sqrt(N)
    for r in range(R):
        if lam[r] != 0.0:
            grad[r, 0] -= sqrtN * lam[r] * _dphi(X[r, 0] / sqrtN, k, kint)
    return grad, e0


@njit(cache=True)
def _tangent_inplace(X, G):
    R, N = X.shape
    for r in range(R):
        dot = 0.0
        for i in range(N):
            dot += X[r, i] * G[r, i]
        dot /= N
        for i in range(N):
            G[r, i] -= dot * X[r, i]


@njit(cache=True)
def _retract_rows(V, out):
    R, N = V.shape
    sqrtN = math.sqrt(N)
    ok = True
    for r in range(R):
        nrm = 0.0
        for i in range(N):
            nrm += V[r, i] * V[r, i]
        nrm = math.sqrt(nrm)
        if not math.isfinite(nrm) or nrm == 0.0:
            ok = False
        s = sqrtN / nrm
        for i in range(N):
            out[r, i] = V[r, i] * s
    return ok


@njit(cache=True)
def _neg_tangent_grad(X, lam, buf, offsets, ps, coefs, k, kint):
    g, _ = total_grad(X, lam, buf, offsets, ps, coefs, k, kint)
    _tangent_inplace(X, g)
    return -g


@njit(cache=True)
def integrate(X, lam, buf, offsets, ps, coefs, k, kint, beta, h, noise, nsteps, scheme):
    R, N = X.shape
    sq = math.sqrt(2.0 * h)
    V = np.empty((R, N))
    for s in range(nsteps):
        if scheme == GD_RK4:
            k1 = _neg_tangent_grad(X, lam, buf, offsets, ps, coefs, k, kint)
            X2 = np.empty((R, N))
            _retract_rows(X + 0.5 * h * k1, X2)
            k2 = _neg_tangent_grad(X2, lam, buf, offsets, ps, coefs, k, kint)
            _retract_rows(X + 0.5 * h * k2, X2)
            k3 = _neg_tangent_grad(X2, lam, buf, offsets, ps, coefs, k, kint)
            _retract_rows(X + h * k3, X2)
            k4 = _neg_tangent_grad(X2, lam, buf, offsets, ps, coefs, k, kint)
            for r in range(R):
                for i in range(N):
                    V[r, i] = X[r, i] + (h / 6.0) * (
                        k1[r, i] + 2.0 * k2[r, i] + 2.0 * k3[r, i] + k4[r, i])
        else:
            g, _ = total_grad(X, lam, buf, offsets, ps, coefs, k, kint)
            for r in range(R):
                xg = 0.0
                xz = 0.0
                for i in range(N):
                    xg += X[r, i] * g[r, i]
                if scheme == LANGEVIN:
                    for i in range(N):
                        xz += X[r, i] * noise[s, r, i]
                xg /= N
                xz /= N
                for i in range(N):
                    d = g[r, i] - xg * X[r, i]
                    if scheme == LANGEVIN:
                        V[r, i] = (X[r, i] - h * beta * d
                                   + sq * (noise[s, r, i] - xz * X[r, i]))
                    else:
                        V[r, i] = X[r, i] - h * d
        for r in range(R):
            for i in range(N):
                if not math.isfinite(V[r, i]):
                    return s
        _retract_rows(V, X)
    return -1
