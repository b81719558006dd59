"""Numba switch.

Set ``DUPIRELAB_NO_NUMBA=1`` to run every hot kernel through its pure-numpy
implementation instead of the jitted one. The flag is read once at import.
"""
import os

_DISABLED = os.environ.get("DUPIRELAB_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # the TBB layer shipped in some images is too old and only warns; prefer OpenMP
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrapper(func):
            return func

        return wrapper

    prange = range

USE_NUMBA = HAVE_NUMBA

JIT_OPTIONS = {"nogil": True, "cache": True}
PAR_OPTIONS = {"nogil": True, "cache": True, "parallel": True}


def set_threads(n):
    """Set the numba worker count (no-op without numba)."""
    if HAVE_NUMBA and n is not None and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
