"""Littlewood-Paley blocks, Besov norms and numerical checks of the
smoothing, interpolation and embedding inequalities on the torus.

Blocks are sharp Euclidean shells: block -1 holds the mean, block j >= 0
holds 2^j <= |k| < 2^(j+1). The shells are disjoint, so the blocks sum to the
field exactly and are mutually orthogonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .rng import STREAM_ROUGH, CounterRNG, pack_modes
from .spectral import (
    DEFAULT_SIDE,
    LinearOperator,
    SpectralField,
    apply,
    coeffs_to_grid,
    half_plane_mask,
    hermitian_from_half,
    next_pow2,
    wavenumbers,
)

INF = math.inf


@dataclass(frozen=True)
class BesovParams:
    alpha: float
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        if not (self.p >= 1 and self.q >= 1):
            raise ValueError("Besov exponents p, q must be at least 1")


@lru_cache(maxsize=16)
def block_index(cutoff: int) -> np.ndarray:
    """Block label of each mode on the [-N, N]^2 square (read-only)."""
    k1, k2 = wavenumbers(cutoff)
    s = (k1 * k1 + k2 * k2).astype(np.int64)
    # 4^j <= |k|^2 < 4^(j+1) in exact integer arithmetic
    bits = np.zeros_like(s)
    nz = s > 0
    bits[nz] = np.floor(np.log2(s[nz])).astype(np.int64)
    # guard the float log against off-by-one at exact powers of two
    bits[nz] += (np.left_shift(1, bits[nz] + 1) <= s[nz]).astype(np.int64)
    bits[nz] -= (np.left_shift(1, bits[nz]) > s[nz]).astype(np.int64)
    out = np.where(nz, bits // 2, -1)
    out.flags.writeable = False
    return out


def max_block(cutoff: int) -> int:
    return int(block_index(cutoff).max())


def lp_block(u: SpectralField, j: int) -> SpectralField:
    if j < -1:
        raise ValueError("block index must be >= -1")
    mask = block_index(u.cutoff) == j
    return SpectralField(np.where(mask, u.coeffs, 0), u.side_length)


def lp_blocks(u: SpectralField) -> list[SpectralField]:
    """Blocks -1 .. J in order; the list sums to ``u``."""
    return [lp_block(u, j) for j in range(-1, max_block(u.cutoff) + 1)]


def _block_grid(u: SpectralField, j: int) -> np.ndarray:
    # block j lives in |k|_inf < 2^(j+1); sample at twice that resolution
    n = u.cutoff
    top = min(n, max(1, 2 ** (j + 1) - 1))
    sub = u.coeffs[n - top:n + top + 1, n - top:n + top + 1]
    m = next_pow2(4 * (top + 1))
    return coeffs_to_grid(np.ascontiguousarray(sub), m, u.side_length)


def block_lp_norm(u: SpectralField, j: int, p: float) -> float:
    """||Delta_j u||_{L^p}; Parseval for p = 2, grid quadrature otherwise."""
    b = lp_block(u, j)
    if p == 2:
        return float(np.sqrt(np.sum(np.abs(b.coeffs) ** 2)))
    g = _block_grid(b, j)
    if p == INF:
        return float(np.max(np.abs(g)))
    cell = (u.side_length / g.shape[0]) ** 2
    return float((cell * np.sum(np.abs(g) ** p)) ** (1.0 / p))


def block_profile(u: SpectralField, p: float) -> np.ndarray:
    """||Delta_j u||_{L^p} for j = -1 .. J."""
    return np.array([block_lp_norm(u, j, p) for j in range(-1, max_block(u.cutoff) + 1)])


def aggregate(profile: np.ndarray, alpha: float, q: float) -> float:
    """l^q norm of 2^(j alpha) * profile_j, j starting at -1."""
    j = np.arange(-1, profile.size - 1)
    w = np.exp2(j * alpha) * profile
    if q == INF:
        return float(w.max())
    return float(np.sum(w ** q) ** (1.0 / q))


def besov_norm(u: SpectralField, params: BesovParams) -> float:
    return aggregate(block_profile(u, params.p), params.alpha, params.q)


def heat(u: SpectralField, t: float) -> SpectralField:
    """e^{-t A^2} u."""
    return apply(LinearOperator("HeatSemigroup", t), u)


# ---------------------------------------------------------------- fields


def rough_field(cutoff: int, alpha: float, seed: int, lane: int = 0,
                side_length: float = DEFAULT_SIDE) -> SpectralField:
    """Zero-mean Gaussian field with coefficients |k|^(-1-alpha) * noise.

    Every dyadic block then carries comparable weight in B^alpha_{inf,inf},
    so the norms are stable under refinement of the cutoff.
    """
    mask = half_plane_mask(cutoff)
    k1, k2 = wavenumbers(cutoff)
    k1, k2 = k1[mask], k2[mask]
    g = CounterRNG(seed, lane).normal(STREAM_ROUGH, pack_modes(k1, k2, 2), step=0)
    amp = np.hypot(k1, k2) ** (-1.0 - alpha) / np.sqrt(2.0)
    return SpectralField(hermitian_from_half(amp * (g[:, 0] + 1j * g[:, 1]), cutoff), side_length)


# ---------------------------------------------------------------- Schauder


def resolved_window(cutoff: int, side_length: float = DEFAULT_SIDE) -> tuple[float, float]:
    """[10 / lambda_max^2, 1 / (10 lambda_min^2)]; empty when t_lo >= t_hi."""
    base = (2 * np.pi / side_length) ** 2
    lam_min = base
    lam_max = base * 2 * cutoff * cutoff
    return 10.0 / lam_max ** 2, 0.1 / lam_min ** 2


@dataclass(frozen=True)
class SchauderFit:
    slope: float
    intercept: float
    times: np.ndarray
    norms: np.ndarray
    window: tuple[float, float]


def schauder_fit(u: SpectralField, alpha: float, delta: float, t_grid=None,
                 p: float = INF, q: float = INF, n_times: int = 25) -> SchauderFit:
    """Least-squares slope of log ||e^{-tA^2} u||_{B^{alpha+delta}_{p,q}} in log t."""
    lo, hi = resolved_window(u.cutoff, u.side_length)
    if not lo < hi:
        raise ValueError(f"no resolved window at cutoff {u.cutoff}: [{lo:.3g}, {hi:.3g}]")
    if t_grid is None:
        t_grid = np.geomspace(lo, hi, n_times)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size < 2:
        raise ValueError("need at least two times")
    if t_grid.min() < lo * (1 - 1e-12) or t_grid.max() > hi * (1 + 1e-12):
        raise ValueError(
            f"time grid [{t_grid.min():.3g}, {t_grid.max():.3g}] leaves the resolved window "
            f"[{lo:.3g}, {hi:.3g}] at cutoff {u.cutoff}")
    params = BesovParams(alpha + delta, p, q)
    norms = np.array([besov_norm(heat(u, t), params) for t in t_grid])
    slope, intercept = np.polyfit(np.log(t_grid), np.log(norms), 1)
    return SchauderFit(float(slope), float(intercept), t_grid, norms, (lo, hi))


def schauder_slope(u: SpectralField, alpha: float, delta: float, t_grid=None,
                   p: float = INF, q: float = INF) -> float:
    return schauder_fit(u, alpha, delta, t_grid, p, q).slope


# ---------------------------------------------------------------- inequalities


def interpolation_slack(u: SpectralField, s1: float, s2: float, theta: float,
                        p: float = 2.0, q: float = 2.0) -> float:
    """||u||_{s1}^theta ||u||_{s2}^(1-theta) - ||u||_{theta s1 + (1-theta) s2}."""
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    prof = block_profile(u, p)
    lhs = aggregate(prof, theta * s1 + (1 - theta) * s2, q)
    rhs = aggregate(prof, s1, q) ** theta * aggregate(prof, s2, q) ** (1 - theta)
    return float(rhs - lhs)


def embedding_ratio(u: SpectralField, alpha: float, p1: float, p2: float, q: float = 2.0) -> float:
    """||u||_{B^{alpha - 2(1/p1 - 1/p2)}_{p2,q}} / ||u||_{B^alpha_{p1,q}} for p1 <= p2."""
    if p1 > p2:
        raise ValueError("embedding needs p1 <= p2")
    inv = lambda p: 0.0 if p == INF else 1.0 / p  # noqa: E731
    beta = alpha - 2.0 * (inv(p1) - inv(p2))
    return besov_norm(u, BesovParams(beta, p2, q)) / besov_norm(u, BesovParams(alpha, p1, q))
