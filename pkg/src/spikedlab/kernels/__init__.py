"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is fixed at import time by the ``SPIKEDLAB_BACKEND`` environment
variable (``numba`` or ``numpy``). When unset, numba is used if it imports.
Both backends consume identical inputs (including pre-drawn noise), so they
agree to floating-point round-off.
"""

import os

import numpy as np

from . import numpy_impl

LANGEVIN = numpy_impl.LANGEVIN
GD_EULER = numpy_impl.GD_EULER
GD_RK4 = numpy_impl.GD_RK4

_requested = os.environ.get("SPIKEDLAB_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"SPIKEDLAB_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

_impl = numpy_impl
BACKEND = "numpy"
if _requested in ("", "numba"):
    try:
        from . import numba_impl
    except ImportError:
        if _requested == "numba":
            raise
    else:
        _impl = numba_impl
        BACKEND = "numba"

_EMPTY_NOISE = np.empty((0, 0, 0))


def noise_grad_energy(X, op):
    """Ambient gradient (R, N) and energy (R,) of H0 at the rows of ``X``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _impl.noise_grad_energy(X, op.buf, op.offsets, op.ps, op.coefs)


def total_grad(X, op, lam, k, kint):
    """Ambient gradient of the full Hamiltonian plus the noise energy."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    lam = np.ascontiguousarray(np.broadcast_to(lam, (X.shape[0],)), dtype=np.float64)
    return _impl.total_grad(X, lam, op.buf, op.offsets, op.ps, op.coefs, float(k), bool(kint))


def integrate(X, op, lam, k, kint, beta, h, nsteps, scheme, noise=None):
    """Advance ``X`` in place; returns -1 on success else the index of the failing step."""
    if not (X.flags.c_contiguous and X.dtype == np.float64):
        raise ValueError("state array must be C-contiguous float64")
    lam = np.ascontiguousarray(np.broadcast_to(lam, (X.shape[0],)), dtype=np.float64)
    if noise is None:
        noise = _EMPTY_NOISE
    else:
        noise = np.ascontiguousarray(noise, dtype=np.float64)
    return int(_impl.integrate(X, lam, op.buf, op.offsets, op.ps, op.coefs, float(k),
                               bool(kint), float(beta), float(h), noise, int(nsteps), int(scheme)))
