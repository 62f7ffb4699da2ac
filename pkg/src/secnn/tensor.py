"""Dense row-major tensors and the raw (non-differentiable) array operations.

A :class:`Tensor` is a thin immutable-by-convention wrapper around a contiguous
numpy buffer restricted to float32 / float64. Arithmetic operators dispatch to
the differentiable functions in :mod:`secnn.functional`, so model code can be
written naturally and still be recorded on an active tape.
"""

from __future__ import annotations

import struct
from typing import Iterable, Sequence

import numpy as np

from . import kernels

DTYPES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}
_DTYPE_CODES = {"f32": 0, "f64": 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class ShapeMismatch(ValueError):
    pass


class DtypeMismatch(TypeError):
    pass


class InvalidAxis(ValueError):
    pass


class Tensor:
    """N-dimensional float array. ``data`` is always C-contiguous."""

    __slots__ = ("data", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            # python scalars/lists and integer arrays default to the training dtype
            if not isinstance(data, np.ndarray) or arr.dtype not in DTYPES:
                arr = arr.astype(np.float32)
        else:
            arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in DTYPES:
            raise DtypeMismatch(f"unsupported dtype {arr.dtype}; use float32 or float64")
        if any(d < 1 for d in arr.shape):
            raise ShapeMismatch(f"all extents must be >= 1, got {arr.shape}")
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={DTYPES[self.dtype]})"

    def __len__(self):
        return self.shape[0]

    # operators record on the active tape via the functional layer
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype if dtype is not None else np.float32))


def _check_dtypes(a: Tensor, b: Tensor):
    if a.dtype != b.dtype:
        raise DtypeMismatch(f"dtype mismatch: {DTYPES[a.dtype]} vs {DTYPES[b.dtype]}")


def broadcast_shape(a: Sequence[int], b: Sequence[int]) -> tuple:
    """Broadcast rule where an extent of 1 stretches to match the other side."""
    out = []
    for i in range(1, max(len(a), len(b)) + 1):
        x = a[-i] if i <= len(a) else 1
        y = b[-i] if i <= len(b) else 1
        if x != y and x != 1 and y != 1:
            raise ShapeMismatch(f"cannot broadcast {tuple(a)} with {tuple(b)}")
        out.append(max(x, y))
    return tuple(reversed(out))


_UNARY = {
    "relu": lambda x: np.maximum(x, 0),
    "sigmoid": lambda x: _sigmoid(x),
    "exp": np.exp,
    "log": np.log,
}
_BINARY = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def _sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def elementwise(op: str, a, b=None) -> Tensor:
    a = as_tensor(a)
    if op in _UNARY:
        if b is not None:
            raise TypeError(f"{op} is unary")
        return Tensor(_UNARY[op](a.data))
    if op not in _BINARY:
        raise ValueError(f"unknown elementwise op {op!r}")
    if b is None:
        raise TypeError(f"{op} needs two operands")
    b = as_tensor(b, a.dtype) if not isinstance(b, Tensor) else b
    _check_dtypes(a, b)
    broadcast_shape(a.shape, b.shape)
    return Tensor(_BINARY[op](a.data, b.data))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner extents differ: {a.shape} x {b.shape}")
    _check_dtypes(a, b)
    return Tensor(a.data @ b.data)


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def im2col(x: Tensor | np.ndarray, kernel: tuple, stride: int = 1, padding: int = 0,
           pad_value: float = 0.0) -> Tensor:
    """Unfold receptive fields into columns: [N,C,H,W] -> [N, C*kh*kw, Hout*Wout]."""
    arr = x.data if isinstance(x, Tensor) else np.ascontiguousarray(x)
    return Tensor(_im2col_array(arr, kernel, stride, padding, pad_value))


def _im2col_array(arr, kernel, stride, padding, pad_value=0.0):
    if arr.ndim != 4:
        raise ShapeMismatch(f"im2col expects [N,C,H,W], got {arr.shape}")
    kh, kw = kernel
    if stride < 1 or padding < 0:
        raise ValueError("stride must be positive and padding nonnegative")
    out_h = conv_output_size(arr.shape[2], kh, stride, padding)
    out_w = conv_output_size(arr.shape[3], kw, stride, padding)
    if out_h < 1 or out_w < 1:
        raise ShapeMismatch(
            f"kernel {kernel} with stride {stride}, padding {padding} does not fit {arr.shape[2:]}")
    return kernels.im2col_raw(arr, kh, kw, stride, padding, out_h, out_w, pad_value)


def col2im(cols: Tensor | np.ndarray, input_shape: tuple, kernel: tuple, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Adjoint of :func:`im2col`: scatter-add columns back into an [N,C,H,W] image."""
    arr = cols.data if isinstance(cols, Tensor) else np.ascontiguousarray(cols)
    return Tensor(_col2im_array(arr, input_shape, kernel, stride, padding))


def _col2im_array(arr, input_shape, kernel, stride, padding):
    _, c, h, w = input_shape
    kh, kw = kernel
    out_h = conv_output_size(h, kh, stride, padding)
    out_w = conv_output_size(w, kw, stride, padding)
    if arr.shape[1:] != (c * kh * kw, out_h * out_w):
        raise ShapeMismatch(f"columns {arr.shape} do not match input {input_shape}")
    return kernels.col2im_raw(arr, c, h, w, kh, kw, stride, padding, out_h, out_w)


def conv2d_direct(x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Six-loop reference convolution. Slow; kept as an oracle for tests."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    out_h = conv_output_size(h, kh, stride, padding)
    out_w = conv_output_size(wd, kw, stride, padding)
    out = np.zeros((n, o, out_h, out_w), dtype=x.dtype)
    for b in range(n):
        for f in range(o):
            for oh in range(out_h):
                for ow in range(out_w):
                    acc = 0.0
                    for ch in range(c):
                        for i in range(kh):
                            ih = oh * stride + i - padding
                            if ih < 0 or ih >= h:
                                continue
                            for j in range(kw):
                                iw = ow * stride + j - padding
                                if 0 <= iw < wd:
                                    acc += x[b, ch, ih, iw] * w[f, ch, i, j]
                    out[b, f, oh, ow] = acc
    return out


def normalize_axes(axes: Iterable[int] | int | None, ndim: int) -> tuple:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise InvalidAxis(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise InvalidAxis(f"repeated axis in {tuple(axes)}")
    return tuple(sorted(out))


def reduce(op: str, t: Tensor, axes=None, keep: bool = False) -> Tensor:
    """Sum / mean / max over ``axes``. An empty axis list returns a copy."""
    axes = normalize_axes(axes, t.ndim)
    if not axes:
        return Tensor(t.data.copy())
    if op == "sum":
        out = t.data.sum(axis=axes, keepdims=keep)
    elif op == "mean":
        out = t.data.mean(axis=axes, keepdims=keep)
    elif op == "max":
        out = t.data.max(axis=axes, keepdims=keep)
    else:
        raise ValueError(f"unknown reduction {op!r}")
    return Tensor(np.asarray(out, dtype=t.dtype))


# -- serialization --------------------------------------------------------

def tensor_to_bytes(t: Tensor | np.ndarray) -> bytes:
    """``<u1 dtype code><u4 rank><u8 extent>*rank`` followed by the little-endian buffer."""
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    code = _DTYPE_CODES[DTYPES[arr.dtype]]
    header = struct.pack("<BI", code, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[Tensor, int]:
    """Decode one tensor starting at ``offset``; returns it and the next offset."""
    try:
        code, rank = struct.unpack_from("<BI", buf, offset)
        offset += 5
        shape = struct.unpack_from(f"<{rank}Q", buf, offset)
        offset += 8 * rank
    except struct.error as exc:
        raise ValueError("truncated tensor header") from exc
    if code not in _CODE_DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    dt = _CODE_DTYPES[code]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if offset + nbytes > len(buf):
        raise ValueError("truncated tensor data")
    arr = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=offset)
    return Tensor(arr.reshape(shape).astype(dt.newbyteorder("="))), offset + nbytes
