"""Truncated Fourier representation of real fields on the 2-torus.

A field of cutoff ``N`` on a torus of side ``L`` is stored as the complex
coefficient array over the full square ``[-N, N]^2`` in the orthonormal basis
``L^{-1} exp(i (2 pi / L) k.x)``, indexed ``coeffs[k1 + N, k2 + N]``. The
Laplacian eigenvalues are ``lambda_k = (2 pi / L)^2 |k|^2``, which for the
default ``L = 2`` equals ``pi^2 |k|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._backend import kernel

DEFAULT_SIDE = 2.0


class ModeIndex(NamedTuple):
    k1: int
    k2: int


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a real scalar field.

    Instances are treated as immutable; arithmetic returns new fields.
    """

    coeffs: np.ndarray
    side_length: float = DEFAULT_SIDE

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 == 0:
            raise ValueError(f"coefficient array must be (2N+1, 2N+1), got {c.shape}")
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def cutoff(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def mean_coeff(self) -> float:
        """m(u): the (0,0) coefficient."""
        n = self.cutoff
        return float(self.coeffs[n, n].real)

    def __getitem__(self, k) -> complex:
        n = self.cutoff
        return complex(self.coeffs[k[0] + n, k[1] + n])

    def _check_compatible(self, other: "SpectralField"):
        if other.coeffs.shape != self.coeffs.shape or other.side_length != self.side_length:
            raise ValueError("fields differ in cutoff or side length")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.coeffs + other.coeffs, self.side_length)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.coeffs - other.coeffs, self.side_length)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * float(scalar), self.side_length)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs, self.side_length)

    def hermitian_defect(self) -> float:
        """max |c(-k) - conj(c(k))|, zero for a real field."""
        c = self.coeffs
        return float(np.max(np.abs(c[::-1, ::-1] - np.conj(c))))

    def is_real_field(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return self.hermitian_defect() <= tol * scale

    def is_zero_mean(self) -> bool:
        n = self.cutoff
        return self.coeffs[n, n] == 0

    @classmethod
    def zeros(cls, cutoff: int, side_length: float = DEFAULT_SIDE) -> "SpectralField":
        n = 2 * cutoff + 1
        return cls(np.zeros((n, n), dtype=np.complex128), side_length)


def wavenumbers(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer arrays ``(k1, k2)`` laid out like ``SpectralField.coeffs``."""
    k = np.arange(-cutoff, cutoff + 1)
    return np.meshgrid(k, k, indexing="ij")


def eigenvalue(k, side_length: float = DEFAULT_SIDE) -> float:
    """lambda_k = (2 pi / L)^2 (k1^2 + k2^2)."""
    if side_length <= 0:
        raise ValueError("side_length must be positive")
    k1, k2 = k
    return (2.0 * np.pi / side_length) ** 2 * (k1 * k1 + k2 * k2)


def eigenvalues(cutoff: int, side_length: float = DEFAULT_SIDE) -> np.ndarray:
    k1, k2 = wavenumbers(cutoff)
    return (2.0 * np.pi / side_length) ** 2 * (k1 * k1 + k2 * k2).astype(np.float64)


def half_plane_mask(cutoff: int) -> np.ndarray:
    """One representative of every +-k pair, the zero mode excluded."""
    k1, k2 = wavenumbers(cutoff)
    return (k1 > 0) | ((k1 == 0) & (k2 > 0))


def single_mode(cutoff: int, k, amplitude: complex = 1.0,
                side_length: float = DEFAULT_SIDE) -> SpectralField:
    """Real field with coefficient ``amplitude`` at k and its conjugate at -k."""
    c = np.zeros((2 * cutoff + 1,) * 2, dtype=np.complex128)
    k1, k2 = k
    if (k1, k2) == (0, 0):
        c[cutoff, cutoff] = complex(amplitude).real
    else:
        c[k1 + cutoff, k2 + cutoff] = amplitude
        c[-k1 + cutoff, -k2 + cutoff] = np.conj(amplitude)
    return SpectralField(c, side_length)


def hermitian_from_half(values: np.ndarray, cutoff: int, zero_mode: float = 0.0) -> np.ndarray:
    """Coefficient array from values on the half-plane representatives.

    ``values`` is ordered like ``coeffs[half_plane_mask(cutoff)]``.
    """
    n = 2 * cutoff + 1
    c = np.zeros((n, n), dtype=np.complex128)
    mask = half_plane_mask(cutoff)
    c[mask] = values
    c = c + np.conj(c[::-1, ::-1])
    c[cutoff, cutoff] = zero_mode
    return c


# ---------------------------------------------------------------- operators

_TAGS = ("A", "A_squared", "Q", "Q_bar", "Lambda_s", "Pi", "HeatSemigroup")


@dataclass(frozen=True)
class LinearOperator:
    """Fourier multiplier. ``param`` is s for Lambda_s, t for HeatSemigroup
    and the power for Q_bar (default 1)."""

    tag: str
    param: float | None = None

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError(f"unknown operator tag {self.tag!r}; expected one of {_TAGS}")
        if self.tag in ("Lambda_s", "HeatSemigroup") and self.param is None:
            raise ValueError(f"{self.tag} needs a parameter")

    def multiplier(self, cutoff: int, side_length: float = DEFAULT_SIDE) -> np.ndarray:
        lam = eigenvalues(cutoff, side_length)
        nonzero = lam > 0
        safe = np.where(nonzero, lam, 1.0)
        if self.tag == "A":
            return -lam
        if self.tag == "A_squared":
            return lam * lam
        if self.tag == "Q":
            return np.where(nonzero, 1.0 / safe, 0.0)
        if self.tag == "Q_bar":
            s = 1.0 if self.param is None else float(self.param)
            return np.where(nonzero, safe ** (-s), 1.0)
        if self.tag == "Lambda_s":
            return (1.0 + lam) ** (0.5 * float(self.param))
        if self.tag == "Pi":
            return nonzero.astype(np.float64)
        # HeatSemigroup: exp(-t A^2)
        return np.exp(-float(self.param) * lam * lam)


A = LinearOperator("A")
A_SQUARED = LinearOperator("A_squared")
Q = LinearOperator("Q")
Q_BAR = LinearOperator("Q_bar")
PI = LinearOperator("Pi")


def apply(op: LinearOperator, u: SpectralField) -> SpectralField:
    return SpectralField(op.multiplier(u.cutoff, u.side_length) * u.coeffs, u.side_length)


def v_alpha_norm(u: SpectralField, alpha: float) -> float:
    """sqrt(m(u)^2 + sum_{k != 0} lambda_k^alpha |u_k|^2)."""
    lam = eigenvalues(u.cutoff, u.side_length)
    nz = lam > 0
    n = u.cutoff
    total = u.coeffs[n, n].real ** 2 + np.sum(lam[nz] ** alpha * np.abs(u.coeffs[nz]) ** 2)
    return float(np.sqrt(total))


def divergence(f1: SpectralField, f2: SpectralField) -> SpectralField:
    """B f = div(f1, f2); coefficient i (2 pi / L)(k1 f1_k + k2 f2_k)."""
    f1._check_compatible(f2)
    k1, k2 = wavenumbers(f1.cutoff)
    scale = 2.0 * np.pi / f1.side_length
    return SpectralField(1j * scale * (k1 * f1.coeffs + k2 * f2.coeffs), f1.side_length)


def gradient(u: SpectralField) -> tuple[SpectralField, SpectralField]:
    """(d/dx1 u, d/dx2 u); B* = -gradient."""
    k1, k2 = wavenumbers(u.cutoff)
    scale = 2.0 * np.pi / u.side_length
    return (SpectralField(1j * scale * k1 * u.coeffs, u.side_length),
            SpectralField(1j * scale * k2 * u.coeffs, u.side_length))


def inner(u: SpectralField, v: SpectralField) -> float:
    """L^2 inner product of two real fields (Parseval)."""
    u._check_compatible(v)
    return float(np.sum(u.coeffs * np.conj(v.coeffs)).real)


# ---------------------------------------------------------------- grids


@dataclass(frozen=True)
class TorusGrid:
    """Real samples on the uniform M x M grid x_j = j L / M."""

    values: np.ndarray
    side_length: float = DEFAULT_SIDE
    points_per_side: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = v.shape[0]
        if v.ndim != 2 or v.shape[1] != m:
            raise ValueError("grid must be square")
        if m < 2 or m & (m - 1):
            raise ValueError(f"grid size must be a power of two, got {m}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "points_per_side", m)

    def integral(self) -> float:
        return float(self.values.sum() * (self.side_length / self.points_per_side) ** 2)


def next_pow2(n: int) -> int:
    return 1 << max(1, int(n - 1).bit_length())


def grid_size(cutoff: int, dealias: str = "oversample") -> int:
    """Grid points per side for pointwise products at this cutoff.

    ``oversample`` gives 2 (2N + 2) rounded up to a power of two, alias-free
    for the cubic nonlinearity and exact for quartic quadrature.
    ``two_thirds`` keeps N <= M/3, alias-free only for quadratic products.
    """
    if dealias == "oversample":
        return next_pow2(2 * (2 * cutoff + 2))
    if dealias == "two_thirds":
        return next_pow2(3 * cutoff + 1)
    raise ValueError(f"unknown dealias mode {dealias!r}")


@kernel
def coeffs_to_grid(coeffs: np.ndarray, m: int, side_length: float) -> np.ndarray:
    """Array-level inverse transform; see ``to_grid``."""
    n = (coeffs.shape[0] - 1) // 2
    spec = np.zeros((m, m // 2 + 1), dtype=np.complex128)
    rows = np.arange(-n, n + 1) % m
    spec[rows, : n + 1] = coeffs[:, n:]
    return np.fft.irfft2(spec, s=(m, m)) * (m * m / side_length)


@kernel
def grid_to_coeffs(values: np.ndarray, n: int, side_length: float) -> np.ndarray:
    """Array-level forward transform with truncation to cutoff ``n``."""
    m = values.shape[0]
    spec = np.fft.rfft2(values) * (side_length / (m * m))
    rows = np.arange(-n, n + 1) % m
    out = np.empty((2 * n + 1, 2 * n + 1), dtype=np.complex128)
    out[:, n:] = spec[rows, : n + 1]
    out[:, :n] = np.conj(spec[(-np.arange(-n, n + 1)) % m, n:0:-1])
    return out


def to_grid(u: SpectralField, m: int | None = None) -> TorusGrid:
    if m is None:
        m = grid_size(u.cutoff)
    if m < 2 * u.cutoff + 1:
        raise ValueError(f"grid of {m} points cannot represent cutoff {u.cutoff} without aliasing")
    return TorusGrid(coeffs_to_grid(u.coeffs, m, u.side_length), u.side_length)


def from_grid(g: TorusGrid, cutoff: int) -> SpectralField:
    if g.points_per_side < 2 * cutoff + 1:
        raise ValueError(f"grid of {g.points_per_side} points cannot resolve cutoff {cutoff}")
    return SpectralField(grid_to_coeffs(g.values, cutoff, g.side_length), g.side_length)
