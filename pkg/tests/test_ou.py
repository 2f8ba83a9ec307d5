import numpy as np
import pytest

from chslab.ou import (
    NoisePair, divergence_noise, divergence_noise_power, mode_layout, ou_ensemble, ou_initial,
    ou_sample, ou_step, ou_variance, sample_noise_increment, stationary_sample, stationary_variance,
)
from chslab.rng import CounterRNG
from chslab.spectral import SpectralField, eigenvalue, eigenvalues, single_mode, v_alpha_norm

L = 2.0


def _within(samples, expected, n_se=5.0):
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return abs(samples.mean() - expected) <= n_se * se


def test_noise_second_moment_mode_10():
    rng = CounterRNG(1)
    draws = np.array([abs(sample_noise_increment(2, 1.0, rng, L, step=i).w1[(1, 0)]) ** 2
                      for i in range(20_000)])
    assert abs(draws.mean() - 1.0) < 0.03


def test_noise_dt_zero_is_zero_and_negative_refused():
    n = sample_noise_increment(3, 0.0, CounterRNG(0), L, step=0)
    assert np.all(n.w1.coeffs == 0) and np.all(n.w2.coeffs == 0)
    with pytest.raises(ValueError):
        sample_noise_increment(3, -1.0, CounterRNG(0))


def test_noise_components_are_hermitian_and_uncorrelated():
    rng = CounterRNG(2)
    cross = []
    for i in range(5000):
        n = sample_noise_increment(2, 1.0, rng, L, step=i)
        assert n.w1.is_real_field() and n.w2.is_real_field()
        cross.append(n.w1[(1, 1)] * np.conj(n.w2[(1, 1)]))
    cross = np.array(cross)
    assert _within(cross.real, 0.0) and _within(cross.imag, 0.0)


def test_divergence_noise_examples():
    d = divergence_noise(NoisePair(single_mode(2, (1, 0), 1.0), SpectralField.zeros(2)))
    assert d[(1, 0)] == pytest.approx(1j * np.pi)
    n = sample_noise_increment(4, 0.3, CounterRNG(5), L, step=0)
    out = divergence_noise(n)
    assert out[(0, 0)] == 0 and out.is_real_field()


def test_divergence_noise_variance_11():
    dt = 0.01
    power = divergence_noise_power(3, dt, 20_000, seed=3, side_length=L)
    layout = mode_layout(3, L)
    idx = np.flatnonzero((layout.k1_rep == 1) & (layout.k2_rep == 1))[0]
    # power holds |BdW|^2 / dt, so its mean is lambda_k = 2 pi^2
    assert _within(power[:, idx], 2 * np.pi ** 2)


def test_divergence_noise_power_matches_fields():
    rng = CounterRNG(7, lane=1)
    p = divergence_noise_power(3, 0.5, 3, seed=7, lane=1, first_step=4, side_length=L)
    layout = mode_layout(3, L)
    for i in range(3):
        d = divergence_noise(sample_noise_increment(3, 0.5, rng, L, step=4 + i))
        direct = np.abs(d.coeffs.ravel()[layout.rep_index]) ** 2 / 0.5
        np.testing.assert_allclose(p[i], direct, rtol=1e-12)


def test_one_step_variance_and_zero_mode():
    t = 0.01
    samples = ou_ensemble(3, t, 20_000, seed=4, side_length=L)
    assert np.all(samples[:, 3, 3] == 0)
    var = ou_variance(3, L, t)
    for k in [(1, 0), (1, 1), (2, -1)]:
        vals = np.abs(samples[:, 3 + k[0], 3 + k[1]]) ** 2
        assert _within(vals, var[3 + k[0], 3 + k[1]])


def test_long_time_variance_is_stationary():
    np.testing.assert_allclose(ou_variance(4, L, 1e6), stationary_variance(4, L), rtol=1e-15)


def test_one_step_law_equals_eight_steps():
    t = 0.005
    one = ou_ensemble(2, t, 20_000, seed=5, side_length=L)
    eight = ou_ensemble(2, t, 20_000, seed=6, n_steps=8, side_length=L)
    for k in [(1, 0), (1, 1), (2, 2)]:
        a = np.abs(one[:, 2 + k[0], 2 + k[1]]) ** 2
        b = np.abs(eight[:, 2 + k[0], 2 + k[1]]) ** 2
        se = np.hypot(a.std() / np.sqrt(a.size), b.std() / np.sqrt(b.size))
        assert abs(a.mean() - b.mean()) <= 5 * se


def test_distinct_modes_uncorrelated():
    s = ou_ensemble(2, 0.01, 20_000, seed=8, side_length=L)
    prod = s[:, 3, 2] * np.conj(s[:, 2, 3])  # (1,0) against (0,1)
    assert _within(prod.real, 0.0) and _within(prod.imag, 0.0)


def test_ou_step_mean_zero_and_matches_ensemble():
    rng = CounterRNG(9, lane=3)
    state = ou_initial(3, L)
    for _ in range(5):
        state = ou_step(state, 0.002, rng)
        assert state.z.mean_coeff == 0
        assert np.all(state.decay[state.decay != 1] < 1)
    assert state.t == pytest.approx(0.01)
    ens = ou_ensemble(3, 0.01, 1, seed=9, first_lane=3, n_steps=5, side_length=L)[0]
    np.testing.assert_array_equal(ens, state.z.coeffs)
    np.testing.assert_array_equal(ou_sample(3, 0.01, CounterRNG(9, 3), n_steps=5, side_length=L).coeffs,
                                  state.z.coeffs)


def test_ou_step_refuses_nonpositive_dt():
    with pytest.raises(ValueError):
        ou_step(ou_initial(2), 0.0, CounterRNG(0))


def test_stationary_sample_moments():
    rng = CounterRNG(10)
    n, N = 20_000, 3
    k10, h = np.empty(n), np.empty(n)
    for i in range(n):
        z = stationary_sample(N, rng, L, step=i)
        assert z.mean_coeff == 0
        k10[i] = abs(z[(1, 0)]) ** 2
        h[i] = v_alpha_norm(z, -1) ** 2
    assert _within(k10, 1 / np.pi ** 2)
    lam = eigenvalues(N, L)
    assert _within(h, np.sum(1 / lam[lam > 0] ** 2))
    assert eigenvalue((1, 0), L) == pytest.approx(np.pi ** 2)
