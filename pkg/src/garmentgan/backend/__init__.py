"""Kernel backend selection: compiled Cython extension with a pure-NumPy fallback.

The active backend is chosen once at import time. Set GARMENTGAN_KERNELS to
"cython" or "numpy" to force one; "cython" raises if the extension is not
built. Default ("auto") prefers the compiled kernels.
"""

from __future__ import annotations

import os

from . import kernels_numpy

_choice = os.environ.get("GARMENTGAN_KERNELS", "auto").lower()

if _choice == "numpy":
    _impl = kernels_numpy
elif _choice == "cython":
    from . import _kernels as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = kernels_numpy

im2col = _impl.im2col
col2im = _impl.col2im
conv_out_size = kernels_numpy.conv_out_size


def backend_name() -> str:
    """Name of the active kernel backend ("cython" or "numpy")."""
    return _impl.BACKEND_NAME
