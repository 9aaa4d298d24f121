"""Numba switch for the hot kernels.

Kernels are written once in the nopython subset. ``njit`` compiles them when
numba is importable and ``HAMCOND_DISABLE_JIT`` is unset; otherwise the very
same functions run as plain Python over numpy arrays.
"""
import os

_DISABLED = os.environ.get("HAMCOND_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    NUMBA_ENABLED = True

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


__all__ = ["NUMBA_ENABLED", "njit"]
