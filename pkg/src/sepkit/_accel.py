"""Optional numba acceleration.

Set ``SEPKIT_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba is
not installed the numpy kernels are used unconditionally.
"""
import os

try:
    from numba import njit as _numba_njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False

_flag = os.environ.get("SEPKIT_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAS_NUMBA and _flag not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba_njit(*args, **kwargs)
