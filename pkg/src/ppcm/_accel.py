"""Optional numba acceleration.

Set ``PPCM_DISABLE_NUMBA=1`` before import to force the pure numpy kernels.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None
    HAVE_NUMBA = False

DISABLED = os.environ.get("PPCM_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(fn):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    No fastmath: the jitted kernels must round exactly like the numpy ones.
    """
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
