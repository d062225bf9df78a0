"""Backend selection for the line-of-sight kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module is used. Set ``TIRE_RME_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("TIRE_RME_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

los_pixels = _impl.los_pixels
los_counts = _impl.los_counts


def backends():
    """Map of backend name to module for every backend importable here."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        out["cython"] = _compiled
    return out
