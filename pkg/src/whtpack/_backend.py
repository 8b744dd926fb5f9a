"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it is
not built or when ``WHTPACK_PURE`` is set to a non-empty, non-"0" value.
"""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("WHTPACK_PURE", "0") in ("", "0"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py

fwht_rows = kernels.fwht_rows
max_pool_2d = kernels.max_pool_2d
im2col = kernels.im2col
col2im = kernels.col2im
maxpool2x2_forward = kernels.maxpool2x2_forward
maxpool2x2_backward = kernels.maxpool2x2_backward
