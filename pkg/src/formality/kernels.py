"""Kernel backend selection.

The compiled extension is used when it has been built; otherwise the
pure-Python implementation with identical semantics is imported.  Set
``FORMALITY_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("FORMALITY_PURE_PYTHON") != "1":
    try:
        from formality import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = None
else:
    _impl = None

if _impl is None:
    from formality import _kernels_py as _impl

wedge_sign = _impl.wedge_sign
add_into = _impl.add_into
scale = _impl.scale
mul = _impl.mul
dy = _impl.dy
dx = _impl.dx
dx_wedge = _impl.dx_wedge
interior = _impl.interior
y_times = _impl.y_times
delta_inv = _impl.delta_inv
truncate = _impl.truncate

__all__ = [
    "BACKEND",
    "wedge_sign",
    "add_into",
    "scale",
    "mul",
    "dy",
    "dx",
    "dx_wedge",
    "interior",
    "y_times",
    "delta_inv",
    "truncate",
]
