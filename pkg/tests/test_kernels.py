import json
import os
import subprocess
import sys

import numpy as np
import pytest

from spikedlab import kernels

SCRIPT = r"""
import json, sys
import numpy as np
from spikedlab import kernels
from spikedlab.landscape import MixtureSpec, sample_disorder
spec = MixtureSpec(N=9, mixture={1: 0.4, 2: 0.6, 3: 1.0}, k=float(sys.argv[1]), lam=2.0, beta=1.0)
d = sample_disorder(spec, 4)
rng = np.random.default_rng(1)
X = rng.standard_normal((3, 9)); X = np.ascontiguousarray(3 * X / np.linalg.norm(X, axis=1)[:, None])
X[:, 0] = np.abs(X[:, 0])
out = {"backend": kernels.BACKEND}
g, e = kernels.noise_grad_energy(X, d.operator)
out["g"], out["e"] = g.tolist(), e.tolist()
for scheme in (kernels.LANGEVIN, kernels.GD_EULER, kernels.GD_RK4):
    Y = X.copy()
    noise = rng.standard_normal((20, 3, 9)) if scheme == kernels.LANGEVIN else None
    kernels.integrate(Y, d.operator, np.full(3, 2.0), spec.k, spec.k_is_integer,
                      1.0 if scheme == kernels.LANGEVIN else 0.0, 1e-3, 20, scheme, noise)
    out[str(scheme)] = Y.tolist()
print(json.dumps(out))
"""


def _run(backend, k):
    env = dict(os.environ, SPIKEDLAB_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", SCRIPT, str(k)], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(res.stdout)


@pytest.mark.parametrize("k", [3.0, 2.5])
def test_backends_agree(k):
    a, b = _run("numpy", k), _run("numba", k)
    assert (a["backend"], b["backend"]) == ("numpy", "numba")
    for key in a:
        if key != "backend":
            assert np.allclose(a[key], b[key], rtol=1e-12, atol=1e-12), key


def test_unknown_backend_rejected():
    env = dict(os.environ, SPIKEDLAB_BACKEND="fortran")
    res = subprocess.run([sys.executable, "-c", "import spikedlab.kernels"], env=env,
                         capture_output=True, text=True)
    assert res.returncode != 0 and "SPIKEDLAB_BACKEND" in res.stderr


def test_failure_step_reported():
    from spikedlab.landscape import MixtureSpec, sample_disorder
    spec = MixtureSpec(N=4, mixture={3: 1.0}, k=3, lam=1.0)
    d = sample_disorder(spec, 0)
    X = np.ascontiguousarray(np.full((1, 4), 1.0))
    X[0, 1] = np.nan
    assert kernels.integrate(X, d.operator, np.ones(1), 3.0, True, 0.0, 1e-3, 5, kernels.GD_EULER) == 0
