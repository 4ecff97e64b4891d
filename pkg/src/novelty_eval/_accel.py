"""Numba switch for the hot kernels.

Set ``NOVELTY_EVAL_DISABLE_NUMBA=1`` to force the pure-numpy path. The flag is
read once at import time.
"""

import os

_DISABLED = os.environ.get("NOVELTY_EVAL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old and warns on first parallel call
        numba.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func=None, **kwargs):
    """``numba.njit`` when numba is on, identity otherwise."""
    opts = {**NUMBA_OPTS, **kwargs}

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return numba.njit(**opts)(f)

    if func is None:
        return wrap
    return wrap(func)


def set_threads(n: int | None) -> None:
    """Cap numba fan-out. Results do not depend on the value."""
    if n is None or not HAVE_NUMBA:
        return
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
