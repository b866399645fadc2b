"""Numba dispatch.

Set ``PORTLAB_NUMBA=0`` before import to force the pure-numpy kernels.
"""
import os

_flag = os.environ.get("PORTLAB_NUMBA", "1").strip().lower()

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _flag not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` with numba when available, else return it untouched."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def pick(fast, slow):
    return fast if USE_NUMBA else slow
