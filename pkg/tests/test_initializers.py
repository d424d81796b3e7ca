import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from spikedlab import initializers as I
from spikedlab import landscape as L
from spikedlab.landscape import MixtureSpec

from conftest import instance


def test_uniform_symmetry_and_hemisphere(rng):
    N, n = 50, 20_000
    X = I.uniform_sphere(N, rng, n)
    assert np.allclose(np.linalg.norm(X, axis=1), math.sqrt(N))
    s = X[:, 0]
    assert abs(s.mean()) < 5 * s.std() / math.sqrt(n)
    H = I.uniform_hemisphere(N, rng, n)
    assert np.all(H[:, 0] > 0)


def test_uniform_rotation_moments(rng):
    N, n = 6, 40_000
    Q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    X = I.uniform_sphere(N, rng, n)
    Y = X @ Q.T
    a = np.array([1.0, -2.0, 0.5, 0.0, 1.0, 3.0])
    pa, pb = X @ a, Y @ a
    se = np.sqrt(pa.var() / n + pb.var() / n)
    assert abs(pa.mean() - pb.mean()) < 5 * se
    assert abs((pa ** 2).mean() - (pb ** 2).mean()) < 5 * np.sqrt(2) * (pa ** 2).std() / math.sqrt(n)


def test_fixed_correlation(rng):
    N, r, n = 20, 0.3, 20_000
    X = I.fixed_correlation(N, r, rng, n)
    assert np.allclose(X[:, 0], r * math.sqrt(N))
    assert np.allclose(np.linalg.norm(X, axis=1), math.sqrt(N))
    x2 = X[:, 1] ** 2
    expect = N * (1 - r * r) / (N - 1)
    assert abs(x2.mean() - expect) < 5 * x2.std() / math.sqrt(n)
    assert I.fixed_correlation(N, 0.0, rng)[0] == 0.0
    with pytest.raises(ValueError):
        I.fixed_correlation(N, 1.0, rng)


@pytest.mark.parametrize("N", [3, 8, 40])
def test_latitude_law_against_quadrature(N):
    dens = lambda m: math.exp(I.latitude_logpdf(m, N))
    assert integrate.quad(dens, -1, 1)[0] == pytest.approx(1.0, abs=1e-9)
    for lo, hi in [(-0.2, 0.1), (0.3, 0.9), (-0.95, -0.5)]:
        assert I.latitude_mass(lo, hi, N) == pytest.approx(integrate.quad(dens, lo, hi)[0], abs=1e-10)
    for m in (-0.5, 0.0, 0.7):
        assert I.latitude_cdf(m, N) == pytest.approx(integrate.quad(dens, -1, m)[0], abs=1e-10)


def test_sample_latitude_ks(rng):
    N, lo, hi = 30, -0.1, 0.25
    m = I.sample_latitude(N, lo, hi, rng, 20_000)
    assert m.min() >= lo and m.max() <= hi
    F = lambda t: (I.latitude_cdf(t, N) - I.latitude_cdf(lo, N)) / I.latitude_mass(lo, hi, N)
    assert stats.kstest(m, F).statistic < 0.015


def test_mala_beta_zero_accepts_everything(small, rng):
    spec, d = small
    X = np.ascontiguousarray(I.uniform_sphere(spec.N, rng, 50))
    assert I.mala(spec, d, X, 0.0, 0.0, 0.3, 20, rng) == 1.0


def test_mala_rejects_noncontiguous(small, rng):
    spec, d = small
    X = np.asfortranarray(I.uniform_sphere(spec.N, rng, 5))
    with pytest.raises(ValueError):
        I.mala(spec, d, X, 0.5, 0.0, 0.1, 1, rng)


def _n3_target_bins(spec, d, beta, edges):
    """Exact bin masses of the latitude under exp(-beta H0) at N = 3 (m is uniform under volume)."""
    sq = math.sqrt(3.0)

    def w(phi, m):
        s = math.sqrt(max(0.0, 1 - m * m))
        x = sq * np.array([m, s * math.cos(phi), s * math.sin(phi)])
        return math.exp(-beta * L.noise_energy(spec, d, x))

    masses = [integrate.dblquad(w, lo, hi, 0, 2 * math.pi, epsabs=1e-10)[0]
              for lo, hi in zip(edges[:-1], edges[1:])]
    return np.array(masses) / sum(masses)


def test_mala_detailed_balance_n3():
    spec = MixtureSpec(N=3, mixture={2: 1.0, 3: 1.5}, k=3, lam=0.0)
    d = L.sample_disorder(spec, 21)
    beta = 1.0
    edges = np.linspace(-1, 1, 9)
    target = _n3_target_bins(spec, d, beta, edges)
    rng = np.random.default_rng(0)
    R = 4000
    X = np.ascontiguousarray(I.uniform_sphere(3, rng, R))
    I.mala(spec, d, X, beta, 0.0, 0.1, 400, rng)
    counts = np.histogram(X[:, 0] / math.sqrt(3), edges)[0]
    freq = counts / R
    se = np.sqrt(target * (1 - target) / R)
    assert np.all(np.abs(freq - target) <= 3 * se + 1e-3)


def test_low_acceptance_warns(small, rng):
    spec, d = small
    init = I.InitSpec(kind="gibbs_noise", beta_init=1.0, mala_step=50.0, burn_in_steps=20)
    with pytest.warns(I.LowAcceptanceWarning):
        I.gibbs_noise_sampler(spec, d, init, rng, 20)


def test_gibbs_guard(small, rng):
    spec, d = small
    with pytest.raises(ValueError):
        I.gibbs_noise_sampler(spec, d, I.InitSpec(kind="gibbs_noise", beta_init=2.0), rng, 2)


def test_mean_energy_decreases_with_beta():
    N = 32
    spec = MixtureSpec(N=N, mixture={2: 1.0}, k=3, lam=0.0)
    d = L.sample_disorder(spec, 3)
    means = []
    for b in (0.0, 0.25, 0.5):
        rng = np.random.default_rng(1)
        s = I.gibbs_noise_sampler(spec, d, I.InitSpec(kind="gibbs_noise", beta_init=b,
                                                      burn_in_steps=300, mala_step=0.1), rng, 2000)
        means.append(np.mean([L.noise_energy(spec, d, x) for x in s.x]))
    assert means[0] > means[1] > means[2]


def test_hemisphere_conditioning(small, rng):
    spec, d = instance(N=10, mixture={2: 1.0, 4: 0.3})
    s = I.gibbs_noise_sampler(spec, d, I.InitSpec(kind="gibbs_noise", beta_init=0.5,
                                                  burn_in_steps=50), rng, 200)
    assert np.all(s.x[:, 0] >= 0) and s.meta["conditioning"] == "sign-flip"
    odd = instance(N=10)
    s = I.gibbs_noise_sampler(*odd, I.InitSpec(kind="gibbs_noise", beta_init=0.5,
                                                burn_in_steps=50), rng, 200)
    assert np.all(s.x[:, 0] >= 0) and s.meta["conditioning"] == "rejection"


def test_banded_membership_and_uniform_law(rng):
    N = 40
    spec = MixtureSpec(N=N, mixture={2: 1.0}, k=3, lam=2.0)
    d = L.sample_disorder(spec, 2)
    init = I.InitSpec(kind="banded_gibbs", beta_init=0.0, band_halfwidth=1.5, burn_in_steps=200,
                      mala_step=0.1, target="pi")
    s = I.banded_gibbs_sampler(spec, d, init, rng, 4000)
    assert np.all(np.abs(s.x[:, 0]) <= 1.5 + 1e-12)
    b = 1.5 / math.sqrt(N)
    F = lambda t: (I.latitude_cdf(t, N) - I.latitude_cdf(-b, N)) / I.latitude_mass(-b, b, N)
    assert stats.kstest(s.x[:, 0] / math.sqrt(N), F).statistic < 0.03


def test_full_band_matches_hemisphere_sampler():
    N = 32
    spec = MixtureSpec(N=N, mixture={2: 1.0}, k=2, lam=0.0)
    d = L.sample_disorder(spec, 4)
    common = dict(beta_init=0.25, burn_in_steps=400, mala_step=0.1)
    a = I.gibbs_noise_sampler(spec, d, I.InitSpec(kind="gibbs_noise", **common),
                              np.random.default_rng(1), 4000)
    b = I.banded_gibbs_sampler(spec, d, I.InitSpec(kind="banded_gibbs", band_halfwidth=math.sqrt(N),
                                                   **common), np.random.default_rng(2), 4000)
    assert stats.ks_2samp(a.x[:, 0], np.abs(b.x[:, 0])).statistic <= 0.05


def test_initspec_validation():
    with pytest.raises(ValueError):
        I.InitSpec(kind="fixed_correlation")
    with pytest.raises(ValueError):
        I.InitSpec(kind="banded_gibbs")
    with pytest.raises(ValueError):
        I.InitSpec(kind="lattice")
    assert I.InitSpec(kind="gibbs_noise").burn_in_steps >= 1000


def test_sample_set_roundtrip(tmp_path, rng):
    init = I.InitSpec(kind="fixed_correlation", r=0.2, seed=9)
    s = I.sample_init(MixtureSpec(N=5, mixture={2: 1.0}, k=3), None, init, 4, rng)
    s.save(tmp_path / "s.csv")
    back = I.SampleSet.load(tmp_path / "s.csv")
    assert np.array_equal(back.x, s.x) and back.init == init
