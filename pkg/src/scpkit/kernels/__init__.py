"""Hot inner loops with a numba path and a pure-numpy fallback.

The backend is picked once at import from ``SCPKIT_BACKEND``:
``numba`` (default when numba imports) or ``numpy``. Both implementations
stay importable as ``numpy_impl`` / ``numba_impl()`` for cross-checks and
benchmarks.
"""
import os

from . import _numpy as numpy_impl

_requested = os.environ.get("SCPKIT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"SCPKIT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")


def numba_impl():
    """Import and return the numba kernel module (compiles lazily)."""
    from . import _numba
    return _numba


BACKEND = "numpy"
_impl = numpy_impl
if _requested == "numba":
    try:
        _impl = numba_impl()
        BACKEND = "numba"
    except ImportError:  # numba missing: silently fall back
        pass

hover_rhs = _impl.hover_rhs
hover_g = _impl.hover_g
hover_jac = _impl.hover_jac
hover_lag_hess = _impl.hover_lag_hess
hover_rk4 = _impl.hover_rk4
sytrf_inertia = _impl.sytrf_inertia
fraction_to_boundary = _impl.fraction_to_boundary

__all__ = [
    "BACKEND", "numpy_impl", "numba_impl",
    "hover_rhs", "hover_g", "hover_jac", "hover_lag_hess", "hover_rk4",
    "sytrf_inertia", "fraction_to_boundary",
]
