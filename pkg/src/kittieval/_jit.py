"""Optional numba acceleration.

Set ``KITTIEVAL_DISABLE_JIT=1`` to run every kernel as plain Python/numpy.
The flag is read once at import time.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}

DISABLED = os.environ.get("KITTIEVAL_DISABLE_JIT", "0").strip().lower() not in _FALSY

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLED


def njit(func=None, **kwargs):
    """``numba.njit`` when acceleration is active, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not USE_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    if func is None:
        return wrap
    return wrap(func)


def backend_name():
    return "numba" if USE_NUMBA else "python"
