"""JIT backend selection.

Kernels in :mod:`ldaucid.kernels` are compiled with numba when it is
importable, unless ``LDAUCID_DISABLE_NUMBA`` is set to a truthy value, in
which case the pure-numpy implementations are used. The flag is read once at
import time.
"""
import os

_FLAG = "LDAUCID_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or an identity decorator without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
