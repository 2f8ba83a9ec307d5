"""Spectral-Galerkin laboratory for the conservative stochastic Cahn-Hilliard
equation on the 2-torus: exact OU convolution, Wick calculus, the shifted
equation, Gibbs sampling and Besov-norm diagnostics."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
from .spectral import SpectralField, TorusGrid, LinearOperator, apply, eigenvalue, v_alpha_norm  # noqa: E402
from .shifted import SimConfig, OuPath, integrate, solve_full, stability_probe  # noqa: E402
from .wick import WickBundle, hermite, make_wick_bundle, recombine, renorm_constant  # noqa: E402

__all__ = [
    "BACKEND", "SpectralField", "TorusGrid", "LinearOperator", "apply", "eigenvalue", "v_alpha_norm",
    "SimConfig", "OuPath", "integrate", "solve_full", "stability_probe",
    "WickBundle", "hermite", "make_wick_bundle", "recombine", "renorm_constant",
]
