"""Kernel backend selection.

The compiled extension is preferred; ``SEDPF_LAB_PURE=1`` in the environment
forces the numpy fallback.  ``BACKEND`` names the active implementation.
"""

import os

from . import _kernels_py

if os.environ.get("SEDPF_LAB_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

gf_axpy = _impl.gf_axpy
gf_scale = _impl.gf_scale
gf_combine = _impl.gf_combine
gf_gather_axpy = _impl.gf_gather_axpy
reduce_window = _impl.reduce_window
s_walk = _impl.s_walk

__all__ = ["BACKEND", "gf_axpy", "gf_scale", "gf_combine", "gf_gather_axpy", "reduce_window", "s_walk"]
