"""Ornstein-Uhlenbeck stochastic convolution, sampled exactly per mode.

Z solves dZ = -1/2 A^2 Z dt + B dW with Z(0) = 0 and B = div acting on a pair
of independent cylindrical Wiener processes. In Fourier space every mode is
an independent complex OU process with decay rate lambda_k^2 / 2 and noise
intensity lambda_k (since B B* = -A), so the update over any dt is exact:

    z'(k) = exp(-lambda^2 dt / 2) z(k) + eta,
    E|eta|^2 = (1 - exp(-lambda^2 dt)) / lambda.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._backend import kernel
from .rng import STREAM_NOISE, STREAM_OU, STREAM_STATIONARY, CounterRNG, counter_normal, pack_modes
from .spectral import (
    DEFAULT_SIDE,
    SpectralField,
    divergence,
    eigenvalues,
    half_plane_mask,
    hermitian_from_half,
    wavenumbers,
)


_OU_STREAM = np.uint64(STREAM_OU)


class ModeLayout:
    """Index bookkeeping for Hermitian-paired draws at one cutoff."""

    def __init__(self, cutoff: int, side_length: float = DEFAULT_SIDE):
        self.cutoff = cutoff
        self.side_length = side_length
        k1, k2 = wavenumbers(cutoff)
        mask = half_plane_mask(cutoff)
        n = 2 * cutoff + 1
        flat = np.arange(n * n).reshape(n, n)
        self.rep_index = flat[mask]
        self.mirror_index = flat[::-1, ::-1][mask]
        self.lam = eigenvalues(cutoff, side_length)
        self.lam_rep = self.lam.ravel()[self.rep_index]
        self.k1_rep = k1[mask]
        self.k2_rep = k2[mask]
        # (n_rep, 2) keys: real and imaginary part of each representative
        self.keys = pack_modes(self.k1_rep, self.k2_rep, 2).reshape(-1)


@lru_cache(maxsize=32)
def mode_layout(cutoff: int, side_length: float = DEFAULT_SIDE) -> ModeLayout:
    return ModeLayout(cutoff, side_length)


@kernel
def ou_update(z, decay, half_sd, rep_index, mirror_index, keys, seed, lane, step):
    """Exact OU step on a flattened coefficient array ``z``.

    ``decay`` is indexed like z; ``half_sd`` is sqrt(step variance / 2) on
    the representatives. Returns a new flattened array.
    """
    g = counter_normal(seed, _OU_STREAM, lane, step, keys)
    m = rep_index.shape[0]
    eta = half_sd * (g[0:2 * m:2] + 1j * g[1:2 * m:2])
    out = decay * z
    out[rep_index] += eta
    out[mirror_index] += np.conj(eta)
    return out


def ou_variance(cutoff: int, side_length: float, t: float) -> np.ndarray:
    """Per-mode variance (1 - exp(-t lambda^2)) / lambda of Z(t); 0 at k = 0."""
    lam = eigenvalues(cutoff, side_length)
    safe = np.where(lam > 0, lam, 1.0)
    return np.where(lam > 0, -np.expm1(-t * lam * lam) / safe, 0.0)


def stationary_variance(cutoff: int, side_length: float = DEFAULT_SIDE) -> np.ndarray:
    """Per-mode variance 1/lambda of the truncated free field; 0 at k = 0."""
    lam = eigenvalues(cutoff, side_length)
    return np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)


# ---------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoisePair:
    w1: SpectralField
    w2: SpectralField


def sample_noise_increment(cutoff: int, dt: float, rng: CounterRNG,
                           side_length: float = DEFAULT_SIDE, step: int | None = None) -> NoisePair:
    """Two independent white-noise increments with E|w(k)|^2 = dt."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    mask = half_plane_mask(cutoff)
    k1, k2 = wavenumbers(cutoff)
    keys = pack_modes(np.append(k1[mask], 0), np.append(k2[mask], 0), 4)
    g = rng.normal(STREAM_NOISE, keys, step=step)
    sd = np.sqrt(dt / 2.0)
    fields = []
    for j in (0, 2):
        half = sd * (g[:-1, j] + 1j * g[:-1, j + 1])
        zero = np.sqrt(dt) * g[-1, j]
        fields.append(SpectralField(hermitian_from_half(half, cutoff, zero), side_length))
    return NoisePair(*fields)


def divergence_noise(n: NoisePair) -> SpectralField:
    """B dW for a noise pair; zero mean by construction."""
    return divergence(n.w1, n.w2)


# ---------------------------------------------------------------- OU process


@dataclass(frozen=True)
class OuState:
    z: SpectralField
    t: float = 0.0
    step_index: int = 0
    dt: float | None = None
    decay: np.ndarray | None = None
    step_var: np.ndarray | None = None


def _step_factors(lam: np.ndarray, dt: float):
    decay = np.exp(-0.5 * lam * lam * dt)
    safe = np.where(lam > 0, lam, 1.0)
    step_var = np.where(lam > 0, -np.expm1(-lam * lam * dt) / safe, 0.0)
    return decay, step_var


def ou_initial(cutoff: int, side_length: float = DEFAULT_SIDE) -> OuState:
    return OuState(SpectralField.zeros(cutoff, side_length))


def ou_step(state: OuState, dt: float, rng: CounterRNG) -> OuState:
    """Advance Z by dt with the exact per-mode transition.

    The randomness of the step is keyed by ``state.step_index`` so a
    trajectory depends only on (seed, lane, dt sequence).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = state.z
    layout = mode_layout(z.cutoff, z.side_length)
    if state.dt == dt and state.decay is not None:
        decay, step_var = state.decay, state.step_var
    else:
        decay, step_var = _step_factors(layout.lam, dt)
    half_sd = np.sqrt(0.5 * step_var.ravel()[layout.rep_index])
    out = ou_update(z.coeffs.ravel().copy(), decay.ravel(), half_sd, layout.rep_index,
                    layout.mirror_index, layout.keys, np.uint64(rng.seed), np.uint64(rng.lane),
                    np.uint64(state.step_index))
    n = z.coeffs.shape[0]
    znew = SpectralField(out.reshape(n, n), z.side_length)
    return OuState(znew, state.t + dt, state.step_index + 1, dt, decay, step_var)


def ou_sample(cutoff: int, t: float, rng: CounterRNG, n_steps: int = 1,
              side_length: float = DEFAULT_SIDE) -> SpectralField:
    """Z(t) from Z(0) = 0 using ``n_steps`` equal exact steps."""
    state = ou_initial(cutoff, side_length)
    for _ in range(n_steps):
        state = ou_step(state, t / n_steps, rng)
    return state.z


def stationary_sample(cutoff: int, rng: CounterRNG, side_length: float = DEFAULT_SIDE,
                      step: int | None = None) -> SpectralField:
    """Draw from the truncated free field: independent modes, E|z_k|^2 = 1/lambda_k."""
    layout = mode_layout(cutoff, side_length)
    g = rng.normal(STREAM_STATIONARY, layout.keys, step=step)
    half = np.sqrt(0.5 / layout.lam_rep) * (g[0::2] + 1j * g[1::2])
    return SpectralField(hermitian_from_half(half, cutoff), side_length)


def ou_ensemble(cutoff: int, t: float, n_samples: int, seed: int, first_lane: int = 0,
                n_steps: int = 1, side_length: float = DEFAULT_SIDE) -> np.ndarray:
    """Coefficients of Z(t) for lanes ``first_lane ..``; shape (n_samples, 2N+1, 2N+1).

    Lane i reproduces ``ou_sample(..., CounterRNG(seed, first_lane + i))``.
    """
    layout = mode_layout(cutoff, side_length)
    dt = t / n_steps
    decay, step_var = _step_factors(layout.lam, dt)
    decay = decay.ravel()
    half_sd = np.sqrt(0.5 * step_var.ravel()[layout.rep_index])
    n = 2 * cutoff + 1
    out = np.empty((n_samples, n, n), dtype=np.complex128)
    seed64 = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    for i in range(n_samples):
        z = np.zeros(n * n, dtype=np.complex128)
        lane = np.uint64(first_lane + i)
        for step in range(n_steps):
            z = ou_update(z, decay, half_sd, layout.rep_index, layout.mirror_index,
                          layout.keys, seed64, lane, np.uint64(step))
        out[i] = z.reshape(n, n)
    return out


def divergence_noise_power(cutoff: int, dt: float, n_samples: int, seed: int, lane: int = 0,
                           first_step: int = 0, side_length: float = DEFAULT_SIDE,
                           max_mode: int | None = None) -> np.ndarray:
    """|(B dW)^(k)|^2 / dt on the half-plane representatives, one row per increment.

    Row i uses the same draws as ``sample_noise_increment(..., step=first_step + i)``.
    Keys do not depend on the cutoff, so restricting to |k|_inf <= max_mode
    only skips work.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    mask = half_plane_mask(cutoff)
    k1, k2 = wavenumbers(cutoff)
    k1, k2 = k1[mask], k2[mask]
    if max_mode is not None:
        keep = np.maximum(np.abs(k1), np.abs(k2)) <= max_mode
        k1, k2 = k1[keep], k2[keep]
    keys = pack_modes(np.append(k1, 0), np.append(k2, 0), 4).ravel()
    scale = 2 * np.pi / side_length
    sd = np.sqrt(dt / 2.0)
    out = np.empty((n_samples, k1.size))
    seed64, lane64 = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF), np.uint64(lane)
    for i in range(n_samples):
        g = counter_normal(seed64, np.uint64(STREAM_NOISE), lane64, np.uint64(first_step + i),
                           keys).reshape(-1, 4)[:-1]
        w1 = sd * (g[:, 0] + 1j * g[:, 1])
        w2 = sd * (g[:, 2] + 1j * g[:, 3])
        d = scale * (k1 * w1 + k2 * w2)
        out[i] = (d.real ** 2 + d.imag ** 2) / dt
    return out
