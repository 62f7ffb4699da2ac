"""Pure-numpy im2col / col2im, used when the compiled extension is absent."""

import numpy as np


def im2col(x, kh, kw, stride, pad, out_h, out_w, pad_value=0.0):
    n, c, _, _ = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=pad_value)
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=x.dtype)
    h_span = stride * (out_h - 1) + 1
    w_span = stride * (out_w - 1) + 1
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + h_span:stride, j:j + w_span:stride]
    return cols.reshape(n, c * kh * kw, out_h * out_w)


def col2im(cols, chans, height, width, kh, kw, stride, pad, out_h, out_w):
    n = cols.shape[0]
    cols = cols.reshape(n, chans, kh, kw, out_h, out_w)
    padded = np.zeros((n, chans, height + 2 * pad, width + 2 * pad), dtype=cols.dtype)
    h_span = stride * (out_h - 1) + 1
    w_span = stride * (out_w - 1) + 1
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i:i + h_span:stride, j:j + w_span:stride] += cols[:, :, i, j]
    if pad:
        padded = padded[:, :, pad:pad + height, pad:pad + width]
    return np.ascontiguousarray(padded)
