"""Backend selection for the compiled hot loops.

Set ``BORELNS_PURE_NUMPY=1`` to bypass numba and run the vectorized numpy
implementations instead. The flag is read once, at import time.
"""

from __future__ import annotations

import os

_FLAG = "BORELNS_PURE_NUMPY"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def pure_numpy_requested() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAS_NUMBA and not pure_numpy_requested()


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator without numba."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("fastmath", False)
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
