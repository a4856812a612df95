"""Select the kernel implementation at import time.

The compiled extension is used when it was built; setting the environment
variable ``STREAMTUNE_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

from . import _kernels_py

if os.environ.get("STREAMTUNE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

makespan = _impl.makespan
smo_solve = _impl.smo_solve
