import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chslab.spectral import SpectralField, hermitian_from_half, half_plane_mask

settings.register_profile(
    "chslab", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("chslab")

ACCEPTANCE_LINES: list[str] = []


def random_field(cutoff: int, seed: int, side: float = 2.0, mean: float = 0.0,
                 decay: float = 0.0) -> SpectralField:
    """Random real field with coefficients ~ |k|^-decay * complex normal."""
    rng = np.random.default_rng(seed)
    m = int(half_plane_mask(cutoff).sum())
    vals = rng.normal(size=m) + 1j * rng.normal(size=m)
    if decay:
        from chslab.spectral import wavenumbers
        k1, k2 = wavenumbers(cutoff)
        mask = half_plane_mask(cutoff)
        vals = vals * np.hypot(k1[mask], k2[mask]) ** (-decay)
    return SpectralField(hermitian_from_half(vals, cutoff, mean), side)


@pytest.fixture
def field_factory():
    return random_field


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# Cheap overrides for every experiment, used by the CLI and determinism tests.
SMALL_CONFIGS = {
    "ou-covariance": ["cutoff=6", "samples=400", "noise_increments=2000", "max_mode=2"],
    "wick-verify": ["cutoff=4", "pairs=100", "fields=3"],
    "energy-identity": ["cutoff=4", "horizon=0.005", "halvings=1", "ratio_lo=0", "ratio_hi=100"],
    "simulate": ["cutoff=4", "horizon=0.002"],
    "stability": ["cutoff=4", "horizon=0.002", "deltas=[1e-6, 1e-7]"],
    "gibbs-invariance": ["cutoff=2", "dt=0.001", "horizon=2.0", "n_chain=4000", "n_burn=400",
                         "record_every=10"],
    "schauder": ["cutoff=32", "fields=2", "n_times=6", "slope_lo=-1", "slope_hi=1"],
    "besov-interp": ["cutoff=8", "fields=5"],
}
