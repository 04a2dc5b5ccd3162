"""Numeric backend selection.

Hot kernels (rigid-body recursions, contact substeps, the QP inner loop) are
compiled with numba when available.  Setting ``LOCODESK_BACKEND=numpy`` runs
the identical code paths as plain Python/NumPy, which is slow but dependency
light and useful for debugging and for benchmarking the compiled kernels
(see ``locodesk.bench``).
"""

import os

_requested = os.environ.get("LOCODESK_BACKEND", "numba").strip().lower()

if _requested not in ("numba", "numpy"):
    raise ValueError(
        f"LOCODESK_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numba":
    try:
        import numba

        BACKEND = "numba"
    except ImportError:
        BACKEND = "numpy"
else:
    BACKEND = "numpy"


def jitted(func):
    """Compile ``func`` with numba when the numba backend is active.

    The decorated functions are written in loop-heavy, array-only style so the
    same source runs under both backends.
    """
    if BACKEND == "numba":
        return numba.njit(func, cache=True, fastmath=False)
    return func
