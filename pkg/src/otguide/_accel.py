"""Backend switch for the compiled kernels.

Set ``OTGUIDE_DISABLE_NUMBA=1`` to force the pure-numpy code path. The flag is
read once at import time.
"""
import os

_FLAG = os.environ.get("OTGUIDE_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(func):
    """Compile ``func`` with numba when available, else return None."""
    if not HAVE_NUMBA:
        return None
    return _njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
