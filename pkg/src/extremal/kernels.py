"""Hot loops, dispatched to the compiled extension when it is available.

Set ``EXTREMAL_PURE_PYTHON=1`` to force the pure-Python versions.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("EXTREMAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

pgs_sweeps = _impl.pgs_sweeps
metropolis_sphere = _impl.metropolis_sphere
