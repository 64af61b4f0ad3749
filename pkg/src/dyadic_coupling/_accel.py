"""Numba switch.

Hot kernels are written twice: an ``@njit`` loop version and a vectorised
numpy version.  Which one runs is decided once, at import time, from the
``DYADIC_COUPLING_DISABLE_JIT`` environment variable (any of ``1``, ``true``,
``yes`` disables numba).  If numba cannot be imported the numpy path is used
regardless.
"""
import os

_FLAG = "DYADIC_COUPLING_DISABLE_JIT"

try:
    import numba as _nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None
    HAVE_NUMBA = False


def jit_disabled_by_env():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not jit_disabled_by_env()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    The loop kernels are always decorated so they can be benchmarked side by
    side with the numpy ones even when ``USE_NUMBA`` is off.
    """
    if HAVE_NUMBA:
        return _nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
