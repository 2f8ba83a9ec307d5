import itertools

import numpy as np
import pytest

from chslab.ou import ou_sample
from chslab.rng import CounterRNG
from chslab.shifted import (
    BlowUpError, OuPath, SimConfig, integrate, nonlinearity, phi1, propagators, solve_full,
    stability_probe, stability_profile, step,
)
from chslab.spectral import SpectralField, eigenvalues, single_mode, v_alpha_norm
from chslab.wick import make_wick_bundle

from conftest import random_field

L = 2.0
ZERO = OuPath("zero")


def small_modes(cutoff, amp=0.5):
    return single_mode(cutoff, (1, 0), amp, L) + single_mode(cutoff, (0, 1), 0.6 * amp, L)


def cube_by_convolution(u: SpectralField) -> np.ndarray:
    """Projected coefficients of u^3 by direct triple convolution: e_a e_b = e_{a+b} / L."""
    n = u.cutoff
    idx = range(-n, n + 1)
    out = np.zeros_like(u.coeffs)
    for a1, a2, b1, b2 in itertools.product(idx, repeat=4):
        ua = u.coeffs[a1 + n, a2 + n]
        ub = u.coeffs[b1 + n, b2 + n]
        if ua == 0 or ub == 0:
            continue
        for c1, c2 in itertools.product(idx, repeat=2):
            k1, k2 = a1 + b1 + c1, a2 + b2 + c2
            if abs(k1) <= n and abs(k2) <= n:
                out[k1 + n, k2 + n] += ua * ub * u.coeffs[c1 + n, c2 + n]
    return out / L ** 2


# ---------------------------------------------------------------- pieces


def test_phi1_branches():
    assert phi1(0.0) == 1.0
    z = np.array([-1e-5, 1e-5, -0.3, -50.0])
    np.testing.assert_allclose(phi1(z), np.expm1(z) / z, rtol=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_nonlinearity_matches_convolution_oracle(n):
    y = random_field(n, 40 + n, side=L)
    w = make_wick_bundle(SpectralField.zeros(n, L), 0.0)
    got = nonlinearity(y, w).coeffs
    np.testing.assert_allclose(got, cube_by_convolution(y), atol=1e-12)


def test_nonlinearity_of_cosine_spreads_to_three_modes():
    y = single_mode(2, (1, 0), 1.0, L)
    out = nonlinearity(y, make_wick_bundle(SpectralField.zeros(2, L), 0.0))
    nz = {(k1 - 2, k2 - 2) for k1, k2 in zip(*np.nonzero(np.abs(out.coeffs) > 1e-14))}
    assert nz == {(1, 0), (-1, 0)}  # (3, 0) lies outside the cutoff
    np.testing.assert_allclose(out.coeffs, cube_by_convolution(y), atol=1e-14)


def test_nonlinearity_zero_inputs_and_z3_shift():
    w = make_wick_bundle(SpectralField.zeros(3, L), 0.4)
    assert np.all(np.abs(nonlinearity(SpectralField.zeros(3, L), w).coeffs) < 1e-15)
    y = random_field(3, 1, side=L)
    z = random_field(3, 2, side=L)
    base = make_wick_bundle(z, 0.2)
    delta = 0.7
    shifted = base.__class__(base.z, base.z2, base.z3, base.c,
                             base.grid + np.array([0, 0, delta])[:, None, None], base.mode)
    diff = nonlinearity(y, shifted).coeffs - nonlinearity(y, base).coeffs
    expected = np.zeros_like(diff)
    expected[3, 3] = delta * L
    np.testing.assert_allclose(diff, expected, atol=1e-12)


def test_step_examples():
    w0 = make_wick_bundle(SpectralField.zeros(4, L), 0.0)
    assert np.all(step(SpectralField.zeros(4, L), w0, 1e-3).coeffs == 0)
    y = single_mode(4, (2, 1), 0.3, L)
    dt = 1e-3
    lam = eigenvalues(4, L)[4 + 2, 4 + 1]
    out = step(y, w0, dt, coupling=0.0)
    assert out[(2, 1)] == pytest.approx(0.3 * np.exp(-lam ** 2 * dt / 2), rel=1e-14)
    z = random_field(4, 3, side=L)
    y = random_field(4, 4, side=L)
    out = step(y, make_wick_bundle(z, 0.3), dt)
    assert out.mean_coeff == 0 and out.is_real_field(1e-13)
    with pytest.raises(ValueError):
        step(single_mode(4, (0, 0), 1.0, L), w0, dt)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_blowup_raises():
    y = single_mode(4, (1, 0), 1e120, L)
    with pytest.raises(BlowUpError):
        step(y, make_wick_bundle(SpectralField.zeros(4, L), 0.0), 1e-3)


def test_semi_implicit_propagator():
    lin, force = propagators(3, L, 1e-3, "semi_implicit_cn")
    lam = eigenvalues(3, L)
    a = 0.5 * lam ** 2 * 1e-3
    np.testing.assert_allclose(lin, (1 - a / 2) / (1 + a / 2))
    assert np.all(np.abs(lin) <= 1)
    with pytest.raises(ValueError):
        propagators(3, L, 1e-3, "rk4")


def test_config_validation():
    for kw in [dict(dt=0), dict(horizon=1e-5, dt=1e-4), dict(wick_mode="x"), dict(scheme="x"),
               dict(dealias="x"), dict(grid=24), dict(grid=8), dict(cutoff=0)]:
        with pytest.raises(ValueError):
            SimConfig(**kw)
    cfg = SimConfig(cutoff=8, dt=1e-3, horizon=0.1)
    assert cfg.m == 64 and cfg.n_steps == 100
    assert SimConfig(cutoff=8, dealias="two_thirds").m == 32


# ---------------------------------------------------------------- trajectories


def test_fused_loop_matches_per_step_api():
    cfg = SimConfig(cutoff=4, dt=1e-4, horizon=2e-3, seed=5)
    y0 = small_modes(4)
    traj = integrate(cfg, y0)
    y = y0
    for j in range(cfg.n_steps):
        y = step(y, make_wick_bundle(traj.z_field(j), cfg.c, cfg.m), cfg.dt)
        np.testing.assert_allclose(y.coeffs, traj.y[j + 1], atol=1e-12)


def test_z_path_equals_ou_sampler():
    cfg = SimConfig(cutoff=4, dt=1e-3, horizon=1e-2, seed=6, lane=2)
    traj = integrate(cfg, small_modes(4))
    z = ou_sample(4, cfg.horizon, CounterRNG(6, 2), n_steps=cfg.n_steps, side_length=L)
    np.testing.assert_allclose(traj.z[-1], z.coeffs, atol=1e-15)


def test_mean_conserved_bitwise():
    cfg = SimConfig(cutoff=6, dt=1e-4, horizon=0.02, seed=1)
    traj = integrate(cfg, random_field(6, 9, side=L, decay=2.0), ledger=False)
    assert np.all(traj.y[:, 6, 6] == 0) and np.all(traj.z[:, 6, 6] == 0)


def test_zero_noise_decays_monotonically():
    cfg = SimConfig(cutoff=4, dt=1e-4, horizon=0.05)
    traj = integrate(cfg, single_mode(4, (1, 1), 0.2, L), z_path=ZERO)
    h = np.array([v_alpha_norm(traj.y_field(i), -1) for i in range(len(traj.times))])
    assert np.all(np.diff(h) <= 0)
    # with Z = 0 only :Z^2: = -c survives, so the pairing is 3 c ||Y||_{L^2}^2
    l2 = np.sum(np.abs(traj.y) ** 2, axis=(1, 2))
    np.testing.assert_allclose(traj.ledger.pairing, 3 * cfg.c * l2, rtol=1e-10)


def test_refinement_is_first_order_without_noise():
    y0 = small_modes(8, amp=1.0)
    finals = []
    for dt in [4e-4, 2e-4, 1e-4, 5e-5, 2.5e-5]:
        cfg = SimConfig(cutoff=8, dt=dt, horizon=0.02)
        finals.append(integrate(cfg, y0, z_path=ZERO, ledger=False, record_every=cfg.n_steps).y[-1])
    lam = eigenvalues(8, L)
    inv = np.where(lam > 0, 1 / np.where(lam > 0, lam, 1), 0)
    diffs = [np.sqrt(np.sum(inv * np.abs(a - b) ** 2)) for a, b in zip(finals, finals[1:])]
    slopes = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(np.abs(slopes - 1.0) <= 0.2), slopes


def test_ledger_residual_shrinks_with_dt():
    y0 = small_modes(6)
    res = []
    for dt in [2e-4, 1e-4, 5e-5]:
        cfg = SimConfig(cutoff=6, dt=dt, horizon=0.02)
        led = integrate(cfg, y0, z_path=ZERO).ledger
        assert len(led.times) == cfg.n_steps + 1
        assert np.all(np.isfinite(led.as_rows()))
        res.append(led.summed_residual())
    assert res[0] > res[1] > res[2]
    assert 1.5 < res[0] / res[1] < 2.5


def test_blowup_is_reported():
    cfg = SimConfig(cutoff=8, dt=1e-2, horizon=1.0)
    with pytest.raises(BlowUpError) as info:
        integrate(cfg, small_modes(8, amp=50.0), z_path=ZERO)
    rep = info.value.report()
    assert rep["status"] == "blow-up" and rep["step"] >= 1


def test_solve_full_start_and_linear_superposition():
    cfg = SimConfig(cutoff=4, dt=1e-4, horizon=5e-3, seed=12, coupling=0.0)
    x0 = random_field(4, 13, side=L, decay=1.5)
    traj = solve_full(cfg, x0)
    np.testing.assert_array_equal(traj.x[0], x0.coeffs)
    lam = eigenvalues(4, L)
    heat = np.exp(-0.5 * lam ** 2 * cfg.horizon) * x0.coeffs
    z = ou_sample(4, cfg.horizon, CounterRNG(12), n_steps=cfg.n_steps, side_length=L).coeffs
    np.testing.assert_allclose(traj.x[-1], heat + z, atol=1e-10)


def test_determinism_and_segment_continuation():
    cfg = SimConfig(cutoff=4, dt=1e-4, horizon=4e-3, seed=3)
    y0 = small_modes(4)
    a, b = integrate(cfg, y0), integrate(cfg, y0)
    np.testing.assert_array_equal(a.y, b.y)
    half = SimConfig(cutoff=4, dt=1e-4, horizon=2e-3, seed=3)
    first = integrate(half, y0, ledger=False)
    second = integrate(half, first.y_field(-1), z0=first.z_field(-1), step_offset=20, ledger=False)
    np.testing.assert_array_equal(second.y[-1], a.y[-1])
    assert second.times[0] == pytest.approx(2e-3)


def test_alternative_options_run():
    y0 = small_modes(4)
    for kw in [dict(scheme="semi_implicit_cn"), dict(wick_mode="variance_exact"),
               dict(dealias="two_thirds")]:
        cfg = SimConfig(cutoff=4, dt=1e-4, horizon=2e-3, seed=2, **kw)
        traj = integrate(cfg, y0)
        assert np.all(np.isfinite(traj.y)) and np.all(traj.y[:, 4, 4] == 0)


def test_variance_exact_uses_zero_constant_at_start():
    cfg = SimConfig(cutoff=4, dt=1e-4, horizon=1e-4, wick_mode="variance_exact")
    y0 = small_modes(4)
    traj = integrate(cfg, y0)
    expected = step(y0, make_wick_bundle(SpectralField.zeros(4, L), 0.0, cfg.m), cfg.dt)
    np.testing.assert_allclose(traj.y[1], expected.coeffs, atol=1e-14)


# ---------------------------------------------------------------- stability


def test_stability_probe_examples():
    cfg = SimConfig(cutoff=4, dt=1e-4, horizon=0.01, seed=4)
    y0 = small_modes(4)
    assert stability_probe(cfg, y0, 0.0) == 1.0
    assert stability_probe(cfg, y0, 1e-6, z_path=ZERO) <= 1.0 + 1e-9
    r1 = stability_probe(cfg, y0, 1e-6)
    r2 = stability_probe(cfg, y0, 1e-7)
    assert abs(r1 - r2) <= 0.2 * r2
    times, prof = stability_profile(cfg, y0, 1e-6)
    assert prof[0] == pytest.approx(1.0, rel=1e-6) and len(times) == len(prof)
    with pytest.raises(ValueError):
        stability_probe(cfg, y0, -1.0)
