# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im kernels.

Both kernels visit kernel offsets in the same (i, j) order as the numpy
fallback so results are bitwise identical between backends.
"""
from libc.string cimport memcpy

import numpy as np

ctypedef fused floating:
    float
    double


cdef inline void _valid_range(Py_ssize_t j, Py_ssize_t stride, Py_ssize_t pad,
                              Py_ssize_t width, Py_ssize_t out_w,
                              Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # output columns ow with 0 <= ow*stride + j - pad < width
    cdef Py_ssize_t a = pad - j
    lo[0] = 0 if a <= 0 else (a + stride - 1) // stride
    cdef Py_ssize_t b = width - 1 + pad - j
    if b < 0:
        hi[0] = 0
    else:
        hi[0] = b // stride + 1
        if hi[0] > out_w:
            hi[0] = out_w
    if lo[0] > hi[0]:
        lo[0] = hi[0]


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad,
           int out_h, int out_w, floating pad_value=0):
    cdef Py_ssize_t n_img = x.shape[0], chans = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t n, c, i, j, oh, ow, ih, lo, hi, base
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((n_img, chans * kh * kw, out_h * out_w), dtype=dtype)
    cdef floating[:, :, ::1] cols = out
    cdef floating* dst
    cdef const floating* src
    with nogil:
        for n in range(n_img):
            for c in range(chans):
                for i in range(kh):
                    for j in range(kw):
                        _valid_range(j, stride, pad, width, out_w, &lo, &hi)
                        dst = &cols[n, (c * kh + i) * kw + j, 0]
                        for oh in range(out_h):
                            ih = oh * stride + i - pad
                            if ih < 0 or ih >= height:
                                for ow in range(out_w):
                                    dst[ow] = pad_value
                            else:
                                src = &x[n, c, ih, 0]
                                base = j - pad
                                for ow in range(lo):
                                    dst[ow] = pad_value
                                if stride == 1:
                                    if hi > lo:
                                        memcpy(dst + lo, src + lo + base,
                                               (hi - lo) * sizeof(floating))
                                else:
                                    for ow in range(lo, hi):
                                        dst[ow] = src[ow * stride + base]
                                for ow in range(hi, out_w):
                                    dst[ow] = pad_value
                            dst += out_w
    return out


def col2im(floating[:, :, ::1] cols, int chans, int height, int width,
           int kh, int kw, int stride, int pad, int out_h, int out_w):
    cdef Py_ssize_t n_img = cols.shape[0]
    cdef Py_ssize_t n, c, i, j, oh, ow, ih, lo, hi, base
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((n_img, chans, height, width), dtype=dtype)
    cdef floating[:, :, :, ::1] x = out
    cdef const floating* src
    cdef floating* dst
    with nogil:
        for n in range(n_img):
            for c in range(chans):
                for i in range(kh):
                    for j in range(kw):
                        _valid_range(j, stride, pad, width, out_w, &lo, &hi)
                        src = &cols[n, (c * kh + i) * kw + j, 0]
                        base = j - pad
                        for oh in range(out_h):
                            ih = oh * stride + i - pad
                            if ih >= 0 and ih < height:
                                dst = &x[n, c, ih, 0]
                                if stride == 1:
                                    dst += base
                                    for ow in range(lo, hi):
                                        dst[ow] += src[ow]
                                else:
                                    for ow in range(lo, hi):
                                        dst[ow * stride + base] += src[ow]
                            src += out_w
    return out
