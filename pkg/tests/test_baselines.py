import math

import numpy as np
import pytest
from scipy import stats

from spikedlab.baselines import (SpikedTensor, combine_observations, power_iteration_trials,
                                 tensor_power_iteration)


def unit(v):
    return v / np.linalg.norm(v)


def test_spike_is_rank_one_and_deterministic():
    t = SpikedTensor.sample(6, 3, 2.0, seed=4)
    diff = t.Y - t.noise
    assert diff[0, 0, 0] == pytest.approx(math.sqrt(6) * 2.0)
    assert np.count_nonzero(diff) == 1
    assert np.array_equal(t.Y, SpikedTensor.sample(6, 3, 2.0, seed=4).Y)
    with pytest.raises(ValueError):
        SpikedTensor.sample(6, 2.5, 1.0, 0)


def test_noise_file_roundtrip(tmp_path):
    t = SpikedTensor.sample(5, 3, 1.5, seed=9)
    path = tmp_path / "w.bin"
    t.save_noise(path)
    back = SpikedTensor.from_noise_file(path, 1.5)
    assert back.seed == 9 and back.k == 3
    assert np.array_equal(back.Y, t.Y)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_noiseless_aligns_in_one_step(k, rng):
    N = 7
    Y = np.zeros((N,) * k)
    Y[(0,) * k] = math.sqrt(N) * 0.3
    x0 = unit(rng.standard_normal(N))
    x0[0] = abs(x0[0])
    res = tensor_power_iteration(Y, x0, 1)
    assert res.overlaps[-1] == pytest.approx(1.0, abs=1e-14)


def test_matrix_case_is_dominant_eigenvector(rng):
    N = 30
    t = SpikedTensor.sample(N, 2, 1.0, seed=2)
    Y = (t.Y + t.Y.T) / 2
    vals, vecs = np.linalg.eigh(Y)
    top = vecs[:, np.argmax(np.abs(vals))]
    res = tensor_power_iteration(Y, unit(rng.standard_normal(N)), 2000)
    assert abs(res.x @ top) >= 1 - 1e-8


def test_null_overlap_stays_small():
    N = 64
    ov = power_iteration_trials(N, 3, 0.0, 100, 30, seed=1)
    assert ov.max() <= 5 / math.sqrt(N)


def test_zero_contraction_restarts(rng):
    res = tensor_power_iteration(np.zeros((4, 4, 4)), unit(rng.standard_normal(4)), 3, rng)
    assert res.restarts == 3
    assert abs(np.linalg.norm(res.x) - 1) < 1e-12
    with pytest.raises(ValueError):
        tensor_power_iteration(np.zeros((4, 4)), np.ones(4), 1)


def test_combined_observations_law():
    N, k, lam, M = 5, 3, 0.7, 4
    obs = [SpikedTensor.sample(N, k, lam, s).Y for s in range(M)]
    Y = combine_observations(obs)
    assert Y[0, 0, 0] - combine_observations([SpikedTensor.sample(N, k, lam, s).noise for s in range(M)])[0, 0, 0] \
        == pytest.approx(math.sqrt(M) * math.sqrt(N) * lam)
    many = combine_observations([SpikedTensor.sample(12, 3, 0.0, s).Y for s in range(M)]).ravel()
    assert stats.kstest(many, "norm").pvalue > 0.01


def test_multi_observation_equivalence():
    N, k, lam, M = 12, 3, 1.2, 4
    a = power_iteration_trials(N, k, lam, 150, 20, seed=3, n_obs=M)
    b = power_iteration_trials(N, k, math.sqrt(M) * lam, 150, 20, seed=4)
    assert stats.ks_2samp(a, b).pvalue > 0.01
