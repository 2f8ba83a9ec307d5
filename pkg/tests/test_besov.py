import numpy as np
import pytest
from hypothesis import given, strategies as st

from chslab.besov import (
    INF, BesovParams, aggregate, besov_norm, block_index, block_lp_norm, embedding_ratio, heat,
    interpolation_slack, lp_block, lp_blocks, max_block, resolved_window, rough_field,
    schauder_fit, schauder_slope,
)
from chslab.spectral import SpectralField, inner, single_mode, v_alpha_norm

from conftest import random_field

L = 2.0


def test_block_membership():
    idx = block_index(4)
    assert idx[4, 4] == -1
    assert idx[4 + 3, 4] == 1          # |k| = 3
    assert idx[4 + 1, 4 + 1] == 0      # |k| = sqrt 2
    assert idx[4 + 2, 4] == 1          # |k| = 2 is the lower edge of block 1
    assert idx[4 + 4, 4 + 4] == 2      # |k| = 4 sqrt 2
    assert max_block(4) == 2
    with pytest.raises(ValueError):
        idx[0, 0] = 3


def test_block_index_exact_at_powers_of_two():
    idx = block_index(64)
    for j in range(7):
        assert idx[64 + 2 ** j, 64] == j
    for j in range(2, 7):
        assert idx[64 + 2 ** j - 1, 64] == j - 1


def test_single_mode_lands_in_one_block():
    u = single_mode(5, (3, 0), 1.0, L)
    blocks = lp_blocks(u)
    nonzero = [j - 1 for j, b in enumerate(blocks) if np.any(b.coeffs)]
    assert nonzero == [1]
    with pytest.raises(ValueError):
        lp_block(u, -2)


@pytest.mark.parametrize("n", [1, 4, 16, 33, 64])
def test_partition_reconstructs(n):
    u = random_field(n, n, side=L, mean=0.7)
    total = sum(b.coeffs for b in lp_blocks(u))
    assert np.abs(total - u.coeffs).max() <= 1e-12


def test_blocks_are_orthogonal():
    u = random_field(16, 2, side=L, mean=0.3)
    blocks = lp_blocks(u)
    for i, a in enumerate(blocks):
        for b in blocks[i + 1:]:
            assert abs(inner(a, b)) == 0.0


def test_norm_examples():
    assert besov_norm(SpectralField.zeros(4, L), BesovParams(0.3, INF, INF)) == 0.0
    u = single_mode(5, (3, 0), 1.0, L)
    # waveform (2 / L) cos(3 pi x) has sup 1 at L = 2
    for alpha in (-1.0, 0.0, 0.5, 2.0):
        assert besov_norm(u, BesovParams(alpha, INF, INF)) == pytest.approx(2.0 ** alpha, rel=1e-12)
    with pytest.raises(ValueError):
        BesovParams(0.0, p=0.5)


def test_block_lp_quadrature_matches_closed_form():
    # ||a cos(2 pi k x / L)||_{L^p}^p = |a|^p L^2 * Gamma((p+1)/2) / (sqrt(pi) Gamma(p/2 + 1))
    from math import gamma, pi, sqrt
    u = single_mode(6, (2, 1), 0.5, L)
    a = 2 * 0.5 / L
    for p, rel in [(4.0, 1e-12), (6.0, 1e-12), (1.0, 0.02), (3.0, 0.02)]:
        # even powers are trigonometric polynomials the grid integrates exactly
        mean_abs = gamma((p + 1) / 2) / (sqrt(pi) * gamma(p / 2 + 1))
        expected = (abs(a) ** p * L * L * mean_abs) ** (1 / p)
        assert block_lp_norm(u, 1, p) == pytest.approx(expected, rel=rel)


def test_aggregate_weights():
    prof = np.array([1.0, 2.0, 3.0])
    assert aggregate(prof, 1.0, INF) == pytest.approx(6.0)
    assert aggregate(prof, 0.0, 1.0) == pytest.approx(6.0)
    assert aggregate(prof, 1.0, 2.0) == pytest.approx(np.sqrt(0.25 + 4 + 36))


@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_interpolation_inequality(seed, s1, s2, theta):
    u = random_field(8, seed, side=L, decay=1.0)
    assert interpolation_slack(u, s1, s2, theta) >= -1e-12


def test_interpolation_rejects_bad_theta():
    with pytest.raises(ValueError):
        interpolation_slack(random_field(4, 0), 0, 1, 1.5)


@pytest.mark.parametrize("alpha", [-0.8, 0.0, 0.7])
def test_equivalence_with_v_alpha_norm(alpha):
    lo, hi = sorted([(2 * np.pi) ** -alpha, np.pi ** -alpha])
    for n in (8, 16, 32, 64):
        for s in range(3):
            u = random_field(n, s, side=L, decay=1.0)
            r = besov_norm(u, BesovParams(alpha)) / v_alpha_norm(u, alpha)
            assert lo * (1 - 1e-12) <= r <= hi * (1 + 1e-12)


def test_embedding_ratio_bounded_over_resolutions():
    for n in (8, 16, 32, 64):
        for s in range(3):
            u = random_field(n, s, side=L, decay=1.0)
            assert embedding_ratio(u, 0.5, 2.0, INF) <= 1.0
            assert embedding_ratio(u, 0.5, 2.0, 4.0) <= 1.0
    with pytest.raises(ValueError):
        embedding_ratio(random_field(4, 0), 0.5, 4.0, 2.0)


def test_heat_on_single_mode_is_exact():
    u = single_mode(4, (1, 2), 0.3, L)
    lam = 5 * np.pi ** 2
    assert heat(u, 1e-3)[(1, 2)] == pytest.approx(0.3 * np.exp(-1e-3 * lam ** 2), rel=1e-14)


def test_rough_field_properties():
    a = rough_field(16, 0.5, seed=1, side_length=L)
    b = rough_field(32, 0.5, seed=1, side_length=L)
    assert a.mean_coeff == 0 and a.is_real_field()
    # keys are per mode, so a larger cutoff extends the same field
    np.testing.assert_array_equal(b.coeffs[16:49, 16:49], a.coeffs)
    assert not np.array_equal(rough_field(16, 0.5, seed=2).coeffs, a.coeffs)


def test_schauder_zero_delta_is_flat():
    u = rough_field(64, 0.5, seed=3, side_length=L)
    assert abs(schauder_slope(u, 0.5, 0.0)) <= 0.05


def test_schauder_window_checks():
    lo, hi = resolved_window(64, L)
    assert lo < hi
    u = rough_field(64, 0.5, seed=3, side_length=L)
    with pytest.raises(ValueError):
        schauder_fit(u, 0.5, 1.0, t_grid=[lo / 10, hi])
    with pytest.raises(ValueError):
        schauder_fit(rough_field(2, 0.5, seed=0), 0.5, 1.0)
    fit = schauder_fit(u, 0.5, 1.0, n_times=12)
    assert fit.times.size == 12 and np.all(np.diff(fit.norms) < 0)
