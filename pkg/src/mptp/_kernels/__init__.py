"""Hot-kernel selection: compiled extension if available, numpy fallback otherwise.

Set MPTP_PURE_PYTHON=1 to force the fallback (used by the benchmark and the
kernel-equivalence test).
"""

import os

from . import _cumprod_py

if os.environ.get("MPTP_PURE_PYTHON", "") not in ("", "0"):
    cumprod_matmul = _cumprod_py.cumprod_matmul
    IMPLEMENTATION = "python"
else:
    try:
        from ._cumprod import cumprod_matmul

        IMPLEMENTATION = "compiled"
    except ImportError:
        cumprod_matmul = _cumprod_py.cumprod_matmul
        IMPLEMENTATION = "python"

__all__ = ["cumprod_matmul", "IMPLEMENTATION"]
