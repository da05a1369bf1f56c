"""Numba dispatch: hot kernels run jitted unless CPRISM_NUMBA=0.

Every kernel in :mod:`cprism.kernels` has a pure-numpy implementation; the
jitted variant is selected at import time. Set ``CPRISM_NUMBA=0`` to force the
numpy path (useful for debugging and for the benchmark baseline), ``1`` to
require numba (import error if unavailable), leave unset for auto-detect.
"""

from __future__ import annotations

import os


def _detect() -> bool:
    flag = os.environ.get("CPRISM_NUMBA", "").strip()
    if flag == "0":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if flag == "1":
            raise
        return False
    return True


NUMBA_ENABLED: bool = _detect()

if NUMBA_ENABLED:
    from numba import njit as _numba_njit

    def njit(func):
        return _numba_njit(cache=True)(func)
else:

    def njit(func):
        return func
