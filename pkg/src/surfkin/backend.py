"""Selects the sweep-kernel implementation at import time.

The compiled extension (surfkin._kernels, built from Cython) is preferred;
the NumPy module surfkin._kernels_py is the fallback with identical
signatures.  Override with the environment variable SURFKIN_BACKEND:

    SURFKIN_BACKEND=python   force the NumPy fallback
    SURFKIN_BACKEND=cython   require the compiled extension (ImportError if
                             it is missing)

Anything else (or unset) means "compiled if available".
"""

import os

from . import _kernels_py

_requested = os.environ.get("SURFKIN_BACKEND", "auto").strip().lower()

if _requested == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _kernels_py
        BACKEND = "python"

advect_x_upwind = _impl.advect_x_upwind
advect_x_muscl = _impl.advect_x_muscl
advect_x_fromm = _impl.advect_x_fromm
advect_v_upwind = _impl.advect_v_upwind
advect_v_muscl = _impl.advect_v_muscl
advect_v_fromm = _impl.advect_v_fromm
advect_fine_masses = _impl.advect_fine_masses


def backend_name() -> str:
    """Name of the active sweep-kernel backend ('cython' or 'python')."""
    return BACKEND
