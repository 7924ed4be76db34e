"""Backend selection for the hot numeric kernels.

Kernels are written twice: a scalar-loop version compiled with numba's
``njit`` and a vectorised numpy version. ``ADVTRAIN_BACKEND=numpy`` forces
the numpy path; otherwise numba is used when it can be imported.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_requested = os.environ.get("ADVTRAIN_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise RuntimeError(f"ADVTRAIN_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

USE_NUMBA = HAVE_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(fn)
    return fn


def select(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
