"""Backend selection for the hot loops.

The compiled extension ``calibmoo._kernels`` is used when it imports; otherwise
the NumPy/SciPy module ``calibmoo._kernels_py`` takes over. Setting
``CALIBMOO_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("CALIBMOO_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

KDTree2D = _impl.KDTree2D
nearest_sq_dists = _impl.nearest_sq_dists
project_points = _impl.project_points
depth_gap_mask = _impl.depth_gap_mask
pareto_ranks = _impl.pareto_ranks


def available_backends():
    """Map backend name -> kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["compiled"] = _kernels
    return out
