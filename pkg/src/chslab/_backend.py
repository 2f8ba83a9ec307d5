"""JIT backend selection.

Hot kernels are written in numpy style so that the same source runs either
as plain numpy or compiled with ``numba.njit``. Set ``CHSLAB_NUMBA=0`` in the
environment before import to force the pure-numpy path.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("CHSLAB_NUMBA", "1").strip().lower()
_REQUESTED = _FLAG not in ("0", "false", "no", "off")

NUMBA_ENABLED = False
if _REQUESTED:
    try:
        import numba
        # registers np.fft inside nopython mode
        import rocket_fft  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - depends on environment
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def kernel(func):
    """Compile ``func`` with numba when enabled, else return it unchanged.

    The uncompiled function stays reachable as ``.py_func`` in both cases so
    benchmarks and tests can compare the two paths in one process.
    """
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    func.py_func = func
    return func
