"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``BIOLAGE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from ._fallback import apply_jumps_generic

if os.environ.get("BIOLAGE_PURE_PYTHON", "0") not in ("", "0"):
    from ._fallback import apply_jumps, rk4_cascade

    BACKEND = "python"
else:
    try:
        from ._kernels import apply_jumps, rk4_cascade

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fallback import apply_jumps, rk4_cascade

        BACKEND = "python"

__all__ = ["BACKEND", "apply_jumps", "apply_jumps_generic", "rk4_cascade"]
