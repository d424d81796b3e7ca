import json
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import betainc, betaincc, gammaln

from spikedlab import landscape as L
from spikedlab.freeenergy import (Band, DegenerateWeightsWarning, ExitTimes, WellReport, detect_well,
                                  entropy_profile, exit_time_experiment, gfeb_eps_range, gfeb_windows,
                                  latitude_strata, log_volume, restricted_free_energy, sample_window,
                                  sphere_free_energy)
from spikedlab.landscape import MixtureSpec


def beta_volume(N, lo, hi):
    """P(lo < m < hi) for the uniform law, from m^2 ~ Beta(1/2, (N-1)/2)."""
    a, b = 0.5, (N - 1) / 2
    if lo >= 0:
        return 0.5 * (betaincc(a, b, lo * lo) - betaincc(a, b, hi * hi))
    if hi <= 0:
        return beta_volume(N, -hi, -lo)
    return 0.5 * (betainc(a, b, lo * lo) + betainc(a, b, hi * hi))


def two_coordinate_instance(N=8, lam=1.0, w11=1.2, w22=-0.8):
    """p=2 disorder touching only x_1 and x_2, so the Gibbs weight depends on (m_1, m_2)."""
    spec = MixtureSpec(N=N, mixture={2: 1.0}, k=3, lam=lam, beta=1.0)
    W = np.zeros((N, N))
    W[0, 0], W[1, 1], W[0, 1] = w11, w22, 0.5
    return spec, L.disorder_from_tensors(spec, {2: W}, seed=1)


def quad_free_energy(spec, d, beta, lo, hi):
    """(1/N) log of the normalized integral over {lo < m_1 < hi} by 2-D quadrature in (m_1, m_2)."""
    N = spec.N
    W = d.tensors[2]
    lognorm = gammaln(N / 2) - gammaln((N - 4) / 2 + 1) - math.log(math.pi)

    def f(m2, m1):
        r = 1 - m1 * m1 - m2 * m2
        if r <= 0:
            return 0.0
        x1, x2 = math.sqrt(N) * m1, math.sqrt(N) * m2
        h0 = (W[0, 0] * x1 * x1 + W[1, 1] * x2 * x2 + W[0, 1] * x1 * x2) / math.sqrt(N)
        H = h0 - N * spec.lam * m1 ** 3
        return math.exp(lognorm + (N - 4) / 2 * math.log(r) - beta * H)

    val, _ = integrate.dblquad(f, lo, hi, lambda m1: -math.sqrt(max(1 - m1 * m1, 0)),
                               lambda m1: math.sqrt(max(1 - m1 * m1, 0)), epsabs=0, epsrel=1e-10)
    return math.log(val) / N


# -- volumes and the beta = 0 limit --------------------------------------------

def test_whole_sphere_is_zero():
    spec, d = two_coordinate_instance()
    est = restricted_free_energy(spec, d, (-1.0, 1.0), 0.0, 1000, np.random.default_rng(0))
    assert est.value == pytest.approx(0.0, abs=1e-12)


def test_log_volume_matches_beta_law():
    rng = np.random.default_rng(4)
    for _ in range(10):
        N = int(rng.integers(4, 60))
        lo, hi = np.sort(rng.uniform(-1, 1, 2))
        assert log_volume(N, (lo, hi)) == pytest.approx(math.log(beta_volume(N, lo, hi)), abs=1e-6)


def test_union_volume():
    N = 20
    v = log_volume(N, [(-0.5, -0.2), (0.1, 0.3)])
    assert math.exp(v) == pytest.approx(beta_volume(N, -0.5, -0.2) + beta_volume(N, 0.1, 0.3), rel=1e-10)


def test_sample_window_law(rng):
    N = 30
    X = sample_window(N, [(-0.4, -0.1), (0.2, 0.5)], rng, 20000)
    m = X[:, 0] / math.sqrt(N)
    assert np.allclose(np.linalg.norm(X, axis=1), math.sqrt(N))
    assert np.all(((m > -0.4) & (m < -0.1)) | ((m > 0.2) & (m < 0.5)))
    share = beta_volume(N, -0.4, -0.1) / (beta_volume(N, -0.4, -0.1) + beta_volume(N, 0.2, 0.5))
    assert np.mean(m < 0) == pytest.approx(share, abs=0.015)


def test_strata_have_equal_volume():
    for lo, hi in latitude_strata(40, 6):
        assert beta_volume(40, lo, hi) == pytest.approx(1 / 6, rel=1e-9)


# -- quadrature oracle at N = 8 ----------------------------------------------

@pytest.mark.parametrize("method", ["direct", "ais"])
@pytest.mark.parametrize("window", [(-1.0, 1.0), (-0.3, 0.2), (0.4, 0.9)])
def test_matches_quadrature(method, window):
    spec, d = two_coordinate_instance()
    exact = quad_free_energy(spec, d, 1.0, *window)
    rng = np.random.default_rng(7)
    est = restricted_free_energy(spec, d, window, 1.0, 4000, rng, method=method, n_temps=30)
    assert abs(est.value - exact) <= 3 * est.std_error + 1e-4


def test_stratified_sphere_and_additivity():
    spec, d = two_coordinate_instance()
    rng = np.random.default_rng(3)
    exact = quad_free_energy(spec, d, 1.0, -1.0, 1.0)
    s = sphere_free_energy(spec, d, 1.0, 2000, rng, n_strata=4, method="direct")
    assert abs(s.value - exact) <= 3 * s.std_error + 1e-4
    # disjoint pieces recombine to the whole
    pieces = [quad_free_energy(spec, d, 1.0, lo, hi) for lo, hi in latitude_strata(8, 4)]
    assert math.log(sum(math.exp(spec.N * p) for p in pieces)) / spec.N == pytest.approx(exact, abs=1e-8)


def test_pure_noise_option():
    spec, d = two_coordinate_instance(lam=3.0)
    exact = quad_free_energy(spec.replace(lam=0.0), d, 1.0, -0.5, 0.5)
    est = restricted_free_energy(spec, d, (-0.5, 0.5), 1.0, 3000, np.random.default_rng(1),
                                 lam=0.0, method="direct")
    assert abs(est.value - exact) <= 3 * est.std_error + 1e-4


def test_degenerate_weights_warn():
    spec = MixtureSpec(N=16, mixture={3: 1.0}, k=3, lam=0.0, beta=1.0)
    d = L.sample_disorder(spec, 0)
    with pytest.warns(DegenerateWeightsWarning):
        restricted_free_energy(spec, d, (-1.0, 1.0), 40.0, 1000, np.random.default_rng(0),
                               method="direct")


def test_rejects():
    spec, d = two_coordinate_instance()
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        restricted_free_energy(spec, d, (-1, 1), 1.0, 999, rng)
    with pytest.raises(ValueError):
        restricted_free_energy(spec, d, (-1, 1), 1.0, 1000, rng, method="umbrella")
    with pytest.raises(ValueError):
        Band(0.0)
    with pytest.raises(ValueError):
        Band(0.1, center=1.5)
    assert Band(0.25).x1_bound(16) == pytest.approx(1.0)
    assert Band(0.5, 0.75).window == (0.25, 1.0)


# -- entropy profiles and wells ----------------------------------------------

def test_beta_zero_profile_is_pure_entropy():
    N = 32
    spec = MixtureSpec(N=N, mixture={3: 1.0}, k=3, lam=0.0, beta=1.0)
    d = L.sample_disorder(spec, 0)
    grid = [-3.0, -1.5, 0.0, 1.5, 3.0]
    rep = entropy_profile(spec, d, 0.0, grid, 0.5, 1000, np.random.default_rng(0), reference="sphere")
    sq = math.sqrt(N)
    for a, I in zip(grid, rep.I_values):
        assert I == pytest.approx(-math.log(beta_volume(N, (a - 0.5) / sq, (a + 0.5) / sq)), abs=1e-6)
    I = rep.I_values
    assert I[2] < I[1] < I[0] and I[2] < I[3] < I[4]
    assert rep.well is not None and rep.well["c"] == 0.0


def test_detect_well():
    grid = [-2.0, -1.0, 0.0, 1.0, 2.0]
    I = [3.0, 1.0, 0.0, 1.5, 2.5]
    w = detect_well(grid, [0.4] * 5, I)
    assert (w["a"], w["c"], w["b"], w["height"]) == (-2.0, 0.0, 2.0, 2.5)
    assert detect_well(grid, [0.4] * 5, I, h=3.0) is None
    assert detect_well(grid, [0.6] * 5, I)["height"] == 2.5
    assert detect_well(grid, [1.5] * 5, I) is None
    assert detect_well(grid, [0.4] * 5, [0, 1, 2, 3, 4]) is None


def test_gfeb_geometry():
    w = gfeb_windows(32, 0.1)
    s = 32 ** 0.1
    assert w["center"] == (0.0, s)
    assert w["upper"] == (1.5 * s, 0.5 * s)
    # edge windows touch the center window but do not overlap it
    assert w["upper"][0] - w["upper"][1] == pytest.approx(w["center"][1])
    assert gfeb_eps_range(3, 0.2) == pytest.approx(0.1)


def test_signal_energy_bounded_on_band(rng):
    N, lam, k = 64, 3.0, 3
    spec = MixtureSpec(N=N, mixture={2: 1.0}, k=k, lam=lam)
    delta = N ** (-0.5 + 0.1)
    X = sample_window(N, Band(delta).window, rng, 2000)
    assert np.all(np.abs([L.signal_energy(spec, x) for x in X]) <= lam * N * delta ** k)


# the band volumes differ by far more than the noise contribution, so a low ESS
# does not threaten the sign
@pytest.mark.filterwarnings("ignore::spikedlab.freeenergy.DegenerateWeightsWarning")
def test_noise_free_energy_gap_sign():
    N, eps, beta = 32, 0.1, 1.0
    spec = MixtureSpec(N=N, mixture={3: 1.0}, k=3, lam=0.0, beta=beta)
    delta = N ** (-0.5 + eps)
    rng = np.random.default_rng(5)
    for seed in range(3):
        d = L.sample_disorder(spec, seed)
        inner = restricted_free_energy(spec, d, (-delta / 2, delta / 2), beta, 2000, rng, n_temps=100)
        outer = restricted_free_energy(spec, d, [(-delta, -delta / 2), (delta / 2, delta)], beta, 2000,
                                       rng, n_temps=100)
        assert inner.value - outer.value > 0


def test_well_report_json(tmp_path):
    rep = WellReport([0.0], [1.0], [2.0], [0.1], "none", None, {"N": 8})
    rep.to_json(tmp_path / "w.json")
    assert json.loads((tmp_path / "w.json").read_text())["I_values"] == [2.0]


# -- exit times ------------------------------------------------------------------

def test_exit_is_fast_without_landscape():
    spec = MixtureSpec(N=8, mixture={2: 1.0}, k=3, lam=0.0, beta=1.0)
    d = L.zero_disorder(spec)
    ex = exit_time_experiment(spec, d, -0.5, 1.0, 40, 5.0, np.random.default_rng(0), burn_in_steps=50,
                              step_h=1e-3, wait_for_recovery=False)
    assert ex.exit_bound == pytest.approx(2 / math.sqrt(8))
    assert np.nanmedian(np.where(ex.exit_censored, np.inf, ex.exit_time)) <= 1.0


def test_exit_bound_outside_sphere():
    spec = MixtureSpec(N=8, mixture={2: 1.0}, k=3, lam=0.0, beta=1.0)
    with pytest.raises(ValueError):
        exit_time_experiment(spec, L.zero_disorder(spec), 0.3, 1.0, 4, 1.0, np.random.default_rng(0))


def test_exit_times_csv(tmp_path):
    ex = ExitTimes(np.array([0.5, np.nan]), np.array([np.nan, np.nan]), 2.0, 1.0, 2.0, 0.5, 0.9)
    assert ex.exit_censored.tolist() == [False, True]
    assert ex.median_recovery() == math.inf
    ex.to_csv(tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[1] == "0,0.5,0,,1"
    assert rows[2] == "1,,1,,1"
