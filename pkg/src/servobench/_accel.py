"""Optional numba acceleration.

Set ``SERVOBENCH_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The
flag is read once at import time.
"""
import os

_FLAG = os.environ.get("SERVOBENCH_DISABLE_NUMBA", "").strip().lower()

try:
    import numba  # noqa: F401
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` with numba when available, else return it untouched."""
    if HAVE_NUMBA:
        return _njit(cache=True, fastmath=False)(fn)
    return fn  # pragma: no cover


def select(fast, slow):
    return fast if USE_NUMBA else slow
