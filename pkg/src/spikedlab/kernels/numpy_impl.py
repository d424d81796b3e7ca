"""Pure-numpy kernels. Reference path and fallback when numba is disabled."""

import numpy as np

LANGEVIN = 0
GD_EULER = 1
GD_RK4 = 2


def _contract(X, block, p):
    R, N = X.shape
    if p == 1:
        return np.broadcast_to(block, (R, N)).copy()
    cur = X @ block.reshape(N, N ** (p - 1))
    for _ in range(p - 2):
        cur = np.matmul(cur.reshape(R, -1, N), X[:, :, None])[:, :, 0]
    return cur


def noise_grad_energy(X, buf, offsets, ps, coefs):
    """Ambient gradient and value of the noise Hamiltonian for each row of X."""
    R, N = X.shape
    grad = np.zeros((R, N))
    energy = np.zeros(R)
    for off, p, c in zip(offsets, ps, coefs):
        block = buf[off:off + N ** p]
        g = _contract(X, block, int(p))
        grad += c * g
        energy += (c / p) * np.einsum("ri,ri->r", g, X)
    return grad, energy


def signal_dphi(m, k, kint):
    if kint:
        return k * m ** (k - 1.0)
    return np.where(m > 0.0, k * np.maximum(m, 0.0) ** (k - 1.0), 0.0)


def total_grad(X, lam, buf, offsets, ps, coefs, k, kint):
    grad, e0 = noise_grad_energy(X, buf, offsets, ps, coefs)
    N = X.shape[1]
    sqrtN = np.sqrt(N)
    m = X[:, 0] / sqrtN
    grad[:, 0] -= sqrtN * lam * signal_dphi(m, k, kint)
    return grad, e0


def _tangent(X, G):
    N = X.shape[1]
    return G - (np.einsum("ri,ri->r", X, G) / N)[:, None] * X


def _retract(V):
    N = V.shape[1]
    return V * (np.sqrt(N) / np.linalg.norm(V, axis=1))[:, None]


def integrate(X, lam, buf, offsets, ps, coefs, k, kint, beta, h, noise, nsteps, scheme):
    """Advance every row of X by nsteps in place; returns -1 or the failing step."""
    args = (lam, buf, offsets, ps, coefs, k, kint)
    sq = np.sqrt(2.0 * h)
    for s in range(nsteps):
        if scheme == GD_RK4:
            k1 = -_tangent(X, total_grad(X, *args)[0])
            X2 = _retract(X + 0.5 * h * k1)
            k2 = -_tangent(X2, total_grad(X2, *args)[0])
            X3 = _retract(X + 0.5 * h * k2)
            k3 = -_tangent(X3, total_grad(X3, *args)[0])
            X4 = _retract(X + h * k3)
            k4 = -_tangent(X4, total_grad(X4, *args)[0])
            V = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            drift = _tangent(X, total_grad(X, *args)[0])
            if scheme == LANGEVIN:
                V = X - (h * beta) * drift + sq * _tangent(X, noise[s])
            else:
                V = X - h * drift
        if not np.all(np.isfinite(V)):
            return s
        X[:] = _retract(V)
    return -1
