"""Backend selection for the convolution hot loops.

The compiled Cython extension is used when it was built; otherwise the numpy
implementation in ``_kernels_py`` takes over. Setting ``SECNN_PURE_PYTHON=1``
forces the fallback. Both backends produce bitwise-identical results.
"""

import os

from . import _kernels_py

if os.environ.get("SECNN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

im2col_raw = _impl.im2col
col2im_raw = _impl.col2im
