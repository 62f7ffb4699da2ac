"""Differentiable operations.

Every function computes its forward result with numpy and registers a
backward closure through :func:`secnn.autograd.record`. Backward closures get
the upstream gradient and a ``needs`` mask, and return one gradient (or
``None``) per input.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .autograd import record
from .tensor import ShapeMismatch, Tensor, as_tensor


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _operand(b, like: Tensor) -> Tensor:
    return b if isinstance(b, Tensor) else as_tensor(b, like.dtype)


def add(a: Tensor, b) -> Tensor:
    b = _operand(b, a)
    out = T.elementwise("add", a, b)
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g, needs: (
        _unbroadcast(g, sa) if needs[0] else None,
        _unbroadcast(g, sb) if needs[1] else None))


def sub(a: Tensor, b) -> Tensor:
    b = _operand(b, a)
    out = T.elementwise("sub", a, b)
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g, needs: (
        _unbroadcast(g, sa) if needs[0] else None,
        _unbroadcast(-g, sb) if needs[1] else None))


def mul(a: Tensor, b) -> Tensor:
    b = _operand(b, a)
    out = T.elementwise("mul", a, b)
    return record(out, (a, b), lambda g, needs: (
        _unbroadcast(g * b.data, a.shape) if needs[0] else None,
        _unbroadcast(g * a.data, b.shape) if needs[1] else None))


def relu(x: Tensor) -> Tensor:
    out = T.elementwise("relu", x)
    # subgradient at exactly 0 is 0
    return record(out, (x,), lambda g, needs: (g * (x.data > 0),))


def sigmoid(x: Tensor) -> Tensor:
    out = T.elementwise("sigmoid", x)
    s = out.data
    return record(out, (x,), lambda g, needs: (g * s * (1 - s),))


def exp(x: Tensor) -> Tensor:
    out = T.elementwise("exp", x)
    return record(out, (x,), lambda g, needs: (g * out.data,))


def log(x: Tensor) -> Tensor:
    out = T.elementwise("log", x)
    return record(out, (x,), lambda g, needs: (g / x.data,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = T.matmul(a, b)
    return record(out, (a, b), lambda g, needs: (
        g @ b.data.T if needs[0] else None,
        a.data.T @ g if needs[1] else None))


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    src = x.shape
    return record(out, (x,), lambda g, needs: (g.reshape(src),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def sum(x: Tensor, axes=None, keep: bool = False) -> Tensor:  # noqa: A001
    axes_n = T.normalize_axes(axes, x.ndim)
    out = T.reduce("sum", x, axes_n, keep)
    kept = tuple(1 if i in axes_n else d for i, d in enumerate(x.shape))

    def back(g, needs):
        return (np.broadcast_to(g.reshape(kept), x.shape).astype(x.dtype),)
    return record(out, (x,), back)


def mean(x: Tensor, axes=None, keep: bool = False) -> Tensor:
    axes_n = T.normalize_axes(axes, x.ndim)
    out = T.reduce("mean", x, axes_n, keep)
    kept = tuple(1 if i in axes_n else d for i, d in enumerate(x.shape))
    count = 1
    for ax in axes_n:
        count *= x.shape[ax]

    def back(g, needs):
        return (np.broadcast_to(g.reshape(kept) / count, x.shape).astype(x.dtype),)
    return record(out, (x,), back)


def global_avg_pool(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N,C] spatial mean."""
    return mean(x, axes=(2, 3))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with weight stored as [out, in]."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"linear expects [N,{weight.shape[1]}], got {x.shape}")
    T._check_dtypes(x, weight)
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def back(g, needs):
        grads = [g @ weight.data if needs[0] else None,
                 g.T @ x.data if needs[1] else None]
        if bias is not None:
            grads.append(g.sum(axis=0) if needs[2] else None)
        return grads
    return record(out, inputs, back)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Convolution through im2col + one batched matmul. Weight is [out, in, kh, kw]."""
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(
            f"conv2d expects [N,{weight.shape[1]},H,W] input, got {x.shape}")
    T._check_dtypes(x, weight)
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    cols = T._im2col_array(x.data, (kh, kw), stride, padding)
    out_h = T.conv_output_size(h, kh, stride, padding)
    out_w = T.conv_output_size(w, kw, stride, padding)
    w2 = weight.data.reshape(o, -1)
    y = np.matmul(w2, cols)
    if bias is not None:
        y += bias.data[None, :, None]
    out = Tensor(y.reshape(n, o, out_h, out_w))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def back(g, needs):
        g2 = g.reshape(n, o, out_h * out_w)
        dx = dw = None
        if needs[0]:
            dcols = np.matmul(w2.T, g2)
            dx = T._col2im_array(dcols, x.shape, (kh, kw), stride, padding)
        if needs[1]:
            dw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        grads = [dx, dw]
        if bias is not None:
            grads.append(g2.sum(axis=(0, 2)) if needs[2] else None)
        return grads
    return record(out, inputs, back)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W) for [N,C,H,W] input.

    In training mode the batch statistics are used and the running buffers are
    updated in place (unbiased variance, like common frameworks); backward
    differentiates through the batch statistics.
    """
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise ShapeMismatch(f"batch_norm expects [N,{gamma.shape[0]},H,W], got {x.shape}")
    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    bshape = (1, -1, 1, 1)
    if training:
        mu = x.data.mean(axis=axes)
        centered = x.data - mu.reshape(bshape)
        var = (centered * centered).mean(axis=axes)
        unbiased = var * count / max(count - 1, 1)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
        centered = x.data - mu.reshape(bshape)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = centered * inv_std.reshape(bshape)
    out = Tensor(xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape))

    def back(g, needs):
        dgamma = (g * xhat).sum(axis=axes) if needs[1] else None
        dbeta = g.sum(axis=axes) if needs[2] else None
        dx = None
        if needs[0]:
            scale = (gamma.data * inv_std).reshape(bshape)
            if training:
                gsum = g.sum(axis=axes).reshape(bshape)
                gxhat = (g * xhat).sum(axis=axes).reshape(bshape)
                dx = scale * (g - gsum / count - xhat * gxhat / count)
            else:
                dx = g * scale
        return dx, dgamma, dbeta
    return record(out, (x, gamma, beta), back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator,
            channelwise: bool = False) -> Tensor:
    """Inverted dropout. ``channelwise`` drops whole [H,W] planes (Dropout2d).

    The sampled mask is kept in the backward closure, so gradients are exact
    for the sampled sub-network.
    """
    if not training or p == 0.0:
        return x
    if p >= 1.0:
        mask = np.zeros((1,) * x.ndim, dtype=x.dtype)
    else:
        shape = x.shape[:2] + (1,) * (x.ndim - 2) if channelwise else x.shape
        keep = rng.random(shape) >= p
        mask = (keep / (1.0 - p)).astype(x.dtype)
    out = Tensor(x.data * mask)
    return record(out, (x,), lambda g, needs: (np.broadcast_to(g * mask, x.shape),))


def max_pool2d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    n, c, h, w = x.shape
    cols = T._im2col_array(x.data, (kernel, kernel), stride, padding, pad_value=-np.inf)
    out_h = T.conv_output_size(h, kernel, stride, padding)
    out_w = T.conv_output_size(w, kernel, stride, padding)
    cols = cols.reshape(n, c, kernel * kernel, out_h * out_w)
    arg = cols.argmax(axis=2)[:, :, None, :]
    y = np.take_along_axis(cols, arg, axis=2)
    out = Tensor(y.reshape(n, c, out_h, out_w))

    def back(g, needs):
        dcols = np.zeros(cols.shape, dtype=x.dtype)
        np.put_along_axis(dcols, arg, g.reshape(n, c, 1, out_h * out_w), axis=2)
        dcols = dcols.reshape(n, c * kernel * kernel, out_h * out_w)
        return (T._col2im_array(dcols, x.shape, (kernel, kernel), stride, padding),)
    return record(out, (x,), back)


def _adaptive_bounds(size: int, out: int):
    return [(i * size // out, -(-(i + 1) * size // out)) for i in range(out)]


def adaptive_avg_pool2d(x: Tensor, output_size: tuple) -> Tensor:
    n, c, h, w = x.shape
    oh, ow = output_size
    rows, cols = _adaptive_bounds(h, oh), _adaptive_bounds(w, ow)
    y = np.empty((n, c, oh, ow), dtype=x.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            y[:, :, i, j] = x.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
    out = Tensor(y)

    def back(g, needs):
        dx = np.zeros(x.shape, dtype=x.dtype)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                area = (r1 - r0) * (c1 - c0)
                dx[:, :, r0:r1, c0:c1] += (g[:, :, i, j] / area)[:, :, None, None]
        return (dx,)
    return record(out, (x,), back)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy as a differentiable scalar."""
    from .optim import cross_entropy

    loss, dlogits = cross_entropy(logits, labels)
    out = Tensor(np.asarray(loss, dtype=logits.dtype))
    return record(out, (logits,), lambda g, needs: (g * dlogits,))
