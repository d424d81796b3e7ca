"""Time the numba and numpy kernel backends on the same workload.

Each backend runs in its own interpreter because the choice is made at import
(SPIKEDLAB_BACKEND). Usage:

    python3 benchmarks/bench_kernels.py [--N 32 64] [--R 64] [--steps 2000]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from spikedlab import kernels
from spikedlab.landscape import MixtureSpec, sample_disorder
from spikedlab.initializers import uniform_hemisphere

N, R, steps, scheme_name = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3]), sys.argv[4]
spec = MixtureSpec(N=N, mixture={2: 0.5, 3: 1.0}, k=3, lam=2.0, beta=1.0)
d = sample_disorder(spec, 7)
op = d.operator
rng = np.random.default_rng(0)
X0 = np.ascontiguousarray(uniform_hemisphere(N, rng, R))
lam = np.full(R, spec.lam)
scheme = {"langevin": kernels.LANGEVIN, "euler": kernels.GD_EULER, "rk4": kernels.GD_RK4}[scheme_name]
noise = rng.standard_normal((steps, R, N)) if scheme == kernels.LANGEVIN else None
beta = 1.0 if scheme == kernels.LANGEVIN else 0.0

# warm-up (includes JIT compilation for numba)
X = X0.copy()
kernels.integrate(X, op, lam, spec.k, True, beta, 1e-3, 2, scheme, None if noise is None else noise[:2])
X = X0.copy()
t = time.perf_counter()
kernels.integrate(X, op, lam, spec.k, True, beta, 1e-3, steps, scheme, noise)
wall = time.perf_counter() - t
print(json.dumps({"backend": kernels.BACKEND, "seconds": wall, "checksum": float(X.sum()),
                  "first": X[0, :4].tolist()}))
"""


def run(backend, N, R, steps, scheme):
    env = dict(os.environ, SPIKEDLAB_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER, str(N), str(R), str(steps), scheme],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[32, 64])
    ap.add_argument("--R", type=int, default=64)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--schemes", nargs="+", default=["langevin", "euler", "rk4"])
    args = ap.parse_args(argv)

    print(f"{'scheme':<10}{'N':>6}{'R':>6}{'steps':>8}{'numpy s':>11}{'numba s':>11}{'speedup':>9}{'max diff':>11}")
    for scheme in args.schemes:
        for N in args.N:
            a = run("numpy", N, args.R, args.steps, scheme)
            b = run("numba", N, args.R, args.steps, scheme)
            diff = max(abs(x - y) for x, y in zip(a["first"], b["first"]))
            print(f"{scheme:<10}{N:>6}{args.R:>6}{args.steps:>8}{a['seconds']:>11.3f}"
                  f"{b['seconds']:>11.3f}{a['seconds'] / b['seconds']:>9.2f}{diff:>11.2e}")


if __name__ == "__main__":
    t0 = time.perf_counter()
    main()
    print(f"total {time.perf_counter() - t0:.1f}s")
