"""Counter-based random numbers keyed by (seed, stream, lane, step, key).

Every draw is a pure function of its key tuple, so a trajectory is bitwise
reproducible regardless of how an ensemble is split across workers or in
which order modes are visited. The mixer is the SplitMix64 finalizer applied
to a Weyl-sequence counter; normals use the Box-Muller cosine branch.
"""
from __future__ import annotations

import numpy as np

from ._backend import kernel

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV53 = 1.0 / 9007199254740992.0

# stream identifiers; one per independent use of randomness
STREAM_OU = 1
STREAM_NOISE = 2
STREAM_STATIONARY = 3
STREAM_PCN_PROPOSAL = 4
STREAM_PCN_ACCEPT = 5
STREAM_ROUGH = 6
STREAM_FIELD = 7

_PACK_OFFSET = 1 << 19


@kernel
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@kernel
def _base_key(seed, stream, lane, step):
    # 1-element arrays: numpy scalars warn on the intended wraparound
    h = _mix(np.full(1, seed, dtype=np.uint64) + _GOLDEN)
    h = _mix(h ^ (np.full(1, stream, dtype=np.uint64) * _GOLDEN))
    h = _mix(h ^ (np.full(1, lane, dtype=np.uint64) * _M1))
    return _mix(h ^ (np.full(1, step, dtype=np.uint64) * _M2))


@kernel
def counter_bits(seed, stream, lane, step, keys):
    """64 random bits per entry of ``keys`` (uint64 array)."""
    base = _base_key(seed, stream, lane, step)
    return _mix((keys + _ONE) * _GOLDEN + base)


@kernel
def counter_uniform(seed, stream, lane, step, keys):
    """Uniform doubles in (0, 1], one per key."""
    bits = counter_bits(seed, stream, lane, step, keys)
    return ((bits >> _S11) + _ONE).astype(np.float64) * _INV53


@kernel
def counter_normal(seed, stream, lane, step, keys):
    """Standard normals, one per key."""
    u1 = counter_uniform(seed, stream, lane, step, keys * _TWO)
    u2 = counter_uniform(seed, stream, lane, step, keys * _TWO + _ONE)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def pack_modes(k1, k2, n_components=1):
    """Stable uint64 key per (mode, component), independent of the cutoff.

    Returns an array with a trailing axis of length ``n_components``.
    """
    k1 = np.asarray(k1, dtype=np.int64) + _PACK_OFFSET
    k2 = np.asarray(k2, dtype=np.int64) + _PACK_OFFSET
    packed = ((k1 << 20) | k2).astype(np.uint64) << np.uint64(3)
    comps = np.arange(n_components, dtype=np.uint64)
    return packed[..., None] | comps


class CounterRNG:
    """Seeded handle on the counter-based generator.

    ``lane`` separates independent trajectories or chains. Calls that do not
    pass an explicit ``step`` consume an internal counter, so a sequence of
    calls is reproducible from (seed, lane) alone.
    """

    def __init__(self, seed: int, lane: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.lane = int(lane)
        self.counter = 0

    def _next_step(self, step):
        if step is None:
            step = self.counter
            self.counter += 1
        return step

    def normal(self, stream: int, keys: np.ndarray, step: int | None = None) -> np.ndarray:
        step = self._next_step(step)
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        flat = counter_normal(np.uint64(self.seed), np.uint64(stream), np.uint64(self.lane),
                              np.uint64(step), keys.ravel())
        return flat.reshape(keys.shape)

    def uniform(self, stream: int, keys: np.ndarray, step: int | None = None) -> np.ndarray:
        step = self._next_step(step)
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        flat = counter_uniform(np.uint64(self.seed), np.uint64(stream), np.uint64(self.lane),
                               np.uint64(step), keys.ravel())
        return flat.reshape(keys.shape)

    def spawn(self, lane: int) -> "CounterRNG":
        return CounterRNG(self.seed, lane)
