"""Optional numba acceleration.

Hot kernels are decorated with :func:`njit` from this module. By default it is
``numba.njit(cache=False, fastmath=False)``. Setting the environment variable
``SOFTBARRIER_NO_NUMBA=1`` before import (or running without numba installed)
turns the decorator into a no-op, so the same kernel source executes as plain
numpy. ``benchmarks/benchmark_flow.py`` times the two paths against each other.
"""

import os

_TRUTHY = ("1", "true", "yes", "on")


def _flag_set() -> bool:
    return os.environ.get("SOFTBARRIER_NO_NUMBA", "").strip().lower() in _TRUTHY


NUMBA_ENABLED = False
if not _flag_set():
    try:
        from numba import njit as _numba_njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised only without numba
        _numba_njit = None


def njit(func=None, **kwargs):
    """numba.njit when acceleration is on, identity decorator otherwise."""
    if NUMBA_ENABLED:
        if func is None:
            return _numba_njit(**kwargs)
        return _numba_njit(func)
    if func is None:
        return lambda f: f
    return func
