import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikedlab import signal_oracle as so
from spikedlab.landscape import MixtureSpec


def spec(N=100, k=3, lam=2.0, beta=1.0):
    return MixtureSpec(N=N, mixture={1: 1.0}, k=k, lam=lam, beta=beta)


def test_effective_potential_values():
    assert so.effective_potential(0.0, 1.0, 3.0, 3) == 0.0
    assert so.effective_potential(0.5, 0.0, 3.0, 3) == pytest.approx(0.5 * math.log(0.75))
    assert so.effective_potential(0.5, 0.0, 3.0, 3) == pytest.approx(-0.14384, abs=1e-5)
    with pytest.raises(ValueError):
        so.effective_potential(1.0, 1.0, 1.0, 3)


@pytest.mark.parametrize("m", [-0.7, -0.1, 0.3, 0.9])
def test_effective_potential_derivative(m):
    h = 1e-6
    fd = (so.effective_potential(m + h, 0.8, 2.5, 3) - so.effective_potential(m - h, 0.8, 2.5, 3)) / (2 * h)
    assert so.effective_potential_prime(m, 0.8, 2.5, 3) == pytest.approx(fd, abs=1e-8)


def test_drift_special_points():
    s = spec()
    assert so.drift_m(0.0, s) == 0.0
    assert so.drift_m(1.0, s) == pytest.approx(-(s.N - 1) / s.N)
    gd = spec(beta=math.inf)
    assert so.drift_m(1.0, gd) == 0.0
    assert so.drift_m(0.5, gd, simplified=True) == pytest.approx(2.0 * 3 * 0.25)


@pytest.mark.parametrize("lam,beta", [(5.0, 1.0), (20.0, 0.5), (3.0, 2.0)])
def test_unstable_fixed_point_near_estimate(lam, beta):
    s = spec(N=10 ** 6, lam=lam, beta=beta)
    m_star = so.unstable_fixed_point(s)
    assert abs(so.drift_m(m_star, s)) < 1e-12
    guess = (1.0 / (beta * lam * 3)) ** (1.0 / (3 - 2))
    assert m_star == pytest.approx(guess, rel=0.15)


def test_ode_trivial_cases():
    s = spec()
    assert so.solve_pure_signal_ode(0.0, s, 5.0)(3.0) == 0.0
    flat = spec(lam=0.0)
    sol = so.solve_pure_signal_ode(0.4, flat, 5.0)
    for t in (0.5, 2.0, 5.0):
        assert sol(t) == pytest.approx(0.4 * math.exp(-t * (flat.N - 1) / flat.N), rel=1e-9)


def test_ode_sandwich_by_power_law():
    """With c = beta lam k (1 - eps) and gamma = k - 1 the closed form stays below m(t)
    until m passes sqrt(eps), where the (1 - m^2) factor stops helping."""
    s = spec(N=10 ** 6, lam=50.0, beta=math.inf)
    m0, eps = 0.05, 0.2
    c, gamma = s.lam * s.k * (1 - eps), s.k - 1
    t_star = so.blowup_time(m0, c, gamma)
    sol = so.solve_pure_signal_ode(m0, s, t_star)
    for t in np.linspace(0, 0.999 * t_star, 200):
        low = so.power_law_bound(m0, c, gamma, t)
        if low > math.sqrt(eps):
            break
        assert sol(t) >= low - 1e-10


def test_power_law_examples():
    assert so.blowup_time(0.1, 1.0, 3.0) == pytest.approx(50.0)
    assert so.power_law_bound(0.3, 2.0, 2.5, 0.0) == 0.3
    with pytest.raises(ValueError, match="Gronwall"):
        so.blowup_time(0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        so.power_law_bound(0.1, 1.0, 3.0, 60.0)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.05, 2.0), c=st.floats(0.1, 3.0), gamma=st.floats(1.2, 4.0))
def test_power_law_closed_form_vs_numeric(a, c, gamma):
    t_star = so.blowup_time(a, c, gamma)
    h, t_ev = so.integrate_power_law(a, c, gamma, 2 * t_star)
    ts = np.linspace(0, 0.9 * t_star, 50)
    assert np.allclose(h(ts), so.power_law_bound(a, c, gamma, ts), rtol=1e-8, atol=0)
    assert abs(t_ev - t_star) <= 1e-6 * t_star


def test_threshold_table_values():
    t3 = so.threshold_table(3)
    assert t3.alpha_c[1] == 1.0 and t3.alpha_c[2] == 0.75 and t3.alpha_c["inf"] == 0.5
    assert so.threshold_table(4).alpha_c["inf"] == 1.0
    assert (t3.k_c[1], t3.k_c[2], t3.k_c["inf"]) == (1.0, 1.5, 2.0)


@pytest.mark.parametrize("k", [3, 4, 5.5])
def test_threshold_monotone_limits(k):
    t = so.threshold_table(k, n_max=40)
    ac = [t.alpha_c[n] for n in range(1, 41)]
    kc = [t.k_c[n] for n in range(1, 41)]
    assert all(a > b for a, b in zip(ac[:-1], ac[1:]))
    assert all(a < b for a, b in zip(kc[:-1], kc[1:]))
    assert ac[-1] - t.alpha_c["inf"] < 0.02 and 2 - kc[-1] < 0.03
    assert t.alpha_c[1] == pytest.approx((k - 1) / 2)


def test_pure_signal_lambda_c_root():
    s = spec(N=64, beta=math.inf)
    lam = so.pure_signal_lambda_c(s, 10.0, 0.9)
    assert so.solve_pure_signal_ode(1 / 8, s, 10.0, lam=lam)(10.0) == pytest.approx(0.9, abs=1e-6)
