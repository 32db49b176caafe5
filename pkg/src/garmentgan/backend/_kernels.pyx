# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im kernels for the convolution hot path.

col2im accumulates the k*k contributions per output pixel in (i, j)
lexicographic order so results are bit-identical to the NumPy fallback.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"

ctypedef fused floating:
    float
    double


def conv_out_size(int size, int k, int stride, int pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t hout = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wout = (w + 2 * pad - kw) // stride + 1
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c * kh * kw, hout * wout), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j, ho, wo, row, sh, sw
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for ho in range(hout):
                            sh = ho * stride + i - pad
                            if sh < 0 or sh >= h:
                                continue
                            for wo in range(wout):
                                sw = wo * stride + j - pad
                                if 0 <= sw < w:
                                    out[ni, row, ho * wout + wo] = x[ni, ci, sh, sw]
    return out_arr


def col2im(floating[:, :, ::1] cols, int h, int w, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t c = cols.shape[1] // (kh * kw)
    cdef Py_ssize_t hout = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wout = (w + 2 * pad - kw) // stride + 1
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j, ho, wo, row, sh, sw
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for ho in range(hout):
                            sh = ho * stride + i - pad
                            if sh < 0 or sh >= h:
                                continue
                            for wo in range(wout):
                                sw = wo * stride + j - pad
                                if 0 <= sw < w:
                                    out[ni, ci, sh, sw] += cols[ni, row, ho * wout + wo]
    return out_arr
