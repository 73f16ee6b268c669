"""Numba acceleration layer with a pure-numpy escape hatch.

All hot kernels in the package are written twice: a numba ``@njit`` version
and a vectorized numpy version.  The numba path is used when numba imports
cleanly and the environment variable ``VOLMORT_NO_NUMBA`` is unset/`0`.
Set ``VOLMORT_NO_NUMBA=1`` to force the numpy fallback (useful on platforms
where numba is unavailable, and for the benchmark in ``benchmarks/``).
"""

import os

_DISABLED = os.environ.get("VOLMORT_NO_NUMBA", "0").strip().lower() in ("1", "true", "yes")

if not _DISABLED:
    try:
        import numba

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


if HAVE_NUMBA:
    from numba import prange
else:
    prange = range


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if HAVE_NUMBA:
        import numba

        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def _wrap(fn):
        return fn

    return _wrap


def backend() -> str:
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if HAVE_NUMBA else "numpy"
