"""Pure-NumPy im2col / col2im kernels (fallback backend).

Both backends must agree bit-for-bit: im2col is pure data movement, and
col2im accumulates the k*k contributions per output pixel in the same
lexicographic (i, j) order as the compiled kernel.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Unfold (N, C, H, W) into column matrix (N, C*kh*kw, Hout*Wout)."""
    n, c, h, w = x.shape
    hout = conv_out_size(h, kh, stride, pad)
    wout = conv_out_size(w, kw, stride, pad)
    if pad > 0:
        xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, :, pad : pad + h, pad : pad + w] = x
    else:
        xp = x
    cols = np.empty((n, c, kh, kw, hout, wout), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * hout : stride, j : j + stride * wout : stride]
    return cols.reshape(n, c * kh * kw, hout * wout)


def col2im(
    cols: np.ndarray,
    h: int,
    w: int,
    kh: int,
    kw: int,
    stride: int,
    pad: int,
) -> np.ndarray:
    """Fold columns (N, C*kh*kw, Hout*Wout) back into (N, C, H, W), summing overlaps."""
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    hout = conv_out_size(h, kh, stride, pad)
    wout = conv_out_size(w, kw, stride, pad)
    cols6 = cols.reshape(n, c, kh, kw, hout, wout)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * hout : stride, j : j + stride * wout : stride] += cols6[:, :, i, j]
    if pad > 0:
        return np.ascontiguousarray(xp[:, :, pad : pad + h, pad : pad + w])
    return xp
