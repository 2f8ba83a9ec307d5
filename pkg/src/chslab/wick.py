"""Hermite polynomials, renormalisation constants and Wick powers.

Wick powers are taken with respect to a constant c: :x^n: = c^{n/2} P_n(x / sqrt c),
written in polynomial form so that c = 0 is the plain power.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .spectral import (
    DEFAULT_SIDE,
    SpectralField,
    TorusGrid,
    coeffs_to_grid,
    eigenvalues,
    grid_size,
    grid_to_coeffs,
)

MAX_DEGREE = 8
WICK_MODES = ("covariance_Q", "variance_exact")


@lru_cache(maxsize=None)
def hermite_coefficients(n: int) -> tuple[int, ...]:
    """Integer coefficients of the probabilists' Hermite polynomial P_n.

    Entry i multiplies x^i.
    """
    if not 0 <= n <= MAX_DEGREE:
        raise ValueError(f"Hermite degree must be in [0, {MAX_DEGREE}], got {n}")
    coeffs = [0] * (n + 1)
    for j in range(n // 2 + 1):
        coeffs[n - 2 * j] = (-1) ** j * factorial(n) // (factorial(n - 2 * j) * factorial(j) * 2 ** j)
    return tuple(coeffs)


def hermite(n: int, x):
    """P_n(x) via Horner on the exact integer coefficients."""
    coeffs = hermite_coefficients(n)
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for a in reversed(coeffs):
        out = out * x + a
    return out if out.ndim else float(out)


def binomial_shift(n: int, s, t):
    """sum_m C(n, m) P_m(s) t^(n-m); equals P_n(s + t)."""
    if not 0 <= n <= MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {MAX_DEGREE}], got {n}")
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    total = np.zeros(np.broadcast(s, t).shape)
    for m in range(n + 1):
        total = total + comb(n, m) * hermite(m, s) * t ** (n - m)
    return total if total.ndim else float(total)


def wick_power(x, n: int, c: float):
    """:x^n: at constant c, i.e. sum_j (-1)^j n!/((n-2j)! j! 2^j) c^j x^(n-2j)."""
    if c < 0:
        raise ValueError("renormalisation constant must be non-negative")
    coeffs = hermite_coefficients(n)
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for power in range(n, -1, -1):
        a = coeffs[power]
        if a:
            out = out + a * c ** ((n - power) // 2) * x ** power
    return out


def renorm_constant(cutoff: int, side_length: float = DEFAULT_SIDE,
                    mode: str = "covariance_Q", t: float | None = None) -> float:
    """Pointwise variance of the truncated field, (1/L^2) sum_{k != 0} weight_k.

    ``covariance_Q`` weights 1/lambda_k; ``variance_exact`` weights
    (1 - exp(-t lambda_k^2)) / lambda_k, the variance of Z(t) from Z(0) = 0.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    lam = eigenvalues(cutoff, side_length)
    lam = lam[lam > 0]
    if mode == "covariance_Q":
        weights = 1.0 / lam
    elif mode == "variance_exact":
        if t is None:
            raise ValueError("variance_exact mode needs a time t")
        weights = -np.expm1(-t * lam * lam) / lam
    else:
        raise ValueError(f"unknown Wick mode {mode!r}")
    return float(np.sum(weights) / side_length ** 2)


@dataclass(frozen=True)
class WickBundle:
    """(Z, :Z^2:, :Z^3:) at one time, with the constant used to build them.

    ``z2`` and ``z3`` are projected to the cutoff. The oversampled grid values
    ``grid`` (rows z, :z^2:, :z^3:) are kept unprojected so that products
    with another field are exact before the final projection.
    """

    z: SpectralField
    z2: SpectralField
    z3: SpectralField
    c: float
    grid: np.ndarray
    mode: str = "covariance_Q"

    @property
    def points_per_side(self) -> int:
        return self.grid.shape[1]


def make_wick_bundle(z: SpectralField, c: float, m: int | None = None,
                     mode: str = "covariance_Q") -> WickBundle:
    if c < 0:
        raise ValueError("renormalisation constant must be non-negative")
    if not z.is_zero_mean():
        raise ValueError("Wick bundle needs a zero-mean field")
    if m is None:
        m = grid_size(z.cutoff)
    L = z.side_length
    zg = coeffs_to_grid(z.coeffs, m, L)
    z2g = zg * zg - c
    z3g = zg * zg * zg - 3.0 * c * zg
    n = z.cutoff
    return WickBundle(
        z=z,
        z2=SpectralField(grid_to_coeffs(z2g, n, L), L),
        z3=SpectralField(grid_to_coeffs(z3g, n, L), L),
        c=float(c),
        grid=np.stack([zg, z2g, z3g]),
        mode=mode,
    )


def recombine_grid(y: SpectralField, w: WickBundle, n: int) -> np.ndarray:
    """Pointwise sum_k C(n, k) y^(n-k) :Z^k: on the bundle's grid."""
    if n not in (2, 3):
        raise ValueError("recombination implemented for n = 2, 3")
    yg = coeffs_to_grid(y.coeffs, w.points_per_side, y.side_length)
    zg, z2g, z3g = w.grid
    if n == 2:
        return yg * yg + 2.0 * yg * zg + z2g
    return yg * yg * yg + 3.0 * yg * yg * zg + 3.0 * yg * z2g + z3g


def recombine(y: SpectralField, w: WickBundle, n: int) -> SpectralField:
    """:(y + Z)^n: projected to the cutoff of ``y``."""
    g = recombine_grid(y, w, n)
    return SpectralField(grid_to_coeffs(g, y.cutoff, y.side_length), y.side_length)


def wick_grid(phi: SpectralField, n: int, c: float, m: int | None = None) -> TorusGrid:
    """Pointwise :phi^n: on the oversampled grid."""
    if m is None:
        m = grid_size(phi.cutoff)
    values = wick_power(coeffs_to_grid(phi.coeffs, m, phi.side_length), n, c)
    return TorusGrid(values, phi.side_length)
