import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secnn.tensor import (DtypeMismatch, InvalidAxis, ShapeMismatch, Tensor, broadcast_shape,
                          col2im, conv2d_direct, conv_output_size, elementwise, im2col, matmul,
                          reduce, tensor_from_bytes, tensor_to_bytes)
from secnn import functional as F


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def test_zero_extent_rejected():
    with pytest.raises(ShapeMismatch):
        Tensor(np.zeros((0, 3)))


def test_rank0_scalar_and_dtype():
    t = Tensor(3.0)
    assert t.shape == () and t.dtype == np.float32
    assert Tensor(np.ones(2, dtype=np.float64)).dtype == np.float64
    assert Tensor(np.arange(3)).dtype == np.float32


def test_bad_dtype():
    with pytest.raises(DtypeMismatch):
        Tensor(np.ones(2), dtype=np.int32)


def test_storage_is_contiguous():
    t = Tensor(np.ones((4, 5))[:, ::2])
    assert t.data.flags.c_contiguous
    assert t.data.size == int(np.prod(t.shape))


def test_relu_values():
    np.testing.assert_array_equal(elementwise("relu", Tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])


def test_add_scalar_broadcast():
    np.testing.assert_array_equal(elementwise("add", Tensor([1.0, 2.0]), 3.0).data, [4, 5])


def test_sigmoid_zero():
    assert elementwise("sigmoid", Tensor(0.0)).item() == 0.5


def test_sigmoid_extremes_finite():
    out = elementwise("sigmoid", Tensor(np.array([-1e4, 1e4], dtype=np.float64))).data
    assert np.all(np.isfinite(out)) and out[0] == 0.0 and out[1] == 1.0


def test_broadcast_failure():
    with pytest.raises(ShapeMismatch):
        elementwise("add", Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_dtype_mismatch():
    with pytest.raises(DtypeMismatch):
        elementwise("mul", Tensor(np.ones(2, np.float32)), Tensor(np.ones(2, np.float64)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=0, max_size=4),
       st.lists(st.integers(1, 4), min_size=0, max_size=4))
def test_broadcast_shape_matches_numpy(a, b):
    try:
        want = np.broadcast_shapes(tuple(a), tuple(b))
    except ValueError:
        with pytest.raises(ShapeMismatch):
            broadcast_shape(a, b)
    else:
        assert broadcast_shape(a, b) == want


def test_matmul_identity_and_dot():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(Tensor(np.eye(2, dtype=np.float32)), m).data, m.data)
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_triple_loop_oracle(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 5))
    got = matmul(Tensor(a), Tensor(b)).data
    ref = triple_loop(a, b)
    assert np.max(np.abs(got - ref) / np.maximum(1, np.abs(ref))) < 1e-6


def test_matmul_errors():
    with pytest.raises(ShapeMismatch):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


@pytest.mark.parametrize("size,stride,out", [(3, 1, 3), (4, 2, 2)])
def test_im2col_output_extent(size, stride, out):
    x = Tensor(np.ones((1, 1, size, size), np.float32))
    cols = im2col(x, (3, 3), stride, 1)
    assert cols.shape == (1, 9, out * out)
    assert conv_output_size(size, 3, stride, 1) == out


def test_im2col_too_small():
    with pytest.raises(ShapeMismatch):
        im2col(Tensor(np.ones((1, 1, 2, 2))), (5, 5), 1, 0)


def test_conv_matches_six_loop_oracle(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    for stride, pad in ((1, 1), (2, 1), (1, 0)):
        got = F.conv2d(Tensor(x), Tensor(w), None, stride, pad).data
        np.testing.assert_allclose(got, conv2d_direct(x, w, stride, pad), rtol=1e-6, atol=1e-9)


def test_conv_f32_matches_oracle(rng):
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    got = F.conv2d(Tensor(x), Tensor(w), None, 1, 1).data
    ref = conv2d_direct(x.astype(np.float64), w.astype(np.float64), 1, 1)
    np.testing.assert_allclose(got, ref, rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("pad", [0, 1, 2])
def test_im2col_col2im_roundtrip_nonoverlapping(rng, pad):
    # stride == kernel and the padded side (6 + 2*pad) divides by 2: each pixel lands in one patch
    x = rng.standard_normal((2, 3, 6, 6))
    cols = im2col(Tensor(x), (2, 2), 2, pad)
    np.testing.assert_array_equal(col2im(cols, x.shape, (2, 2), 2, pad).data, x)


def test_col2im_is_adjoint_of_im2col(rng):
    x = rng.standard_normal((2, 3, 7, 6))
    for stride, pad in ((1, 1), (2, 1), (2, 0)):
        cols = im2col(Tensor(x), (3, 3), stride, pad).data
        c = rng.standard_normal(cols.shape)
        lhs = float((cols * c).sum())
        rhs = float((x * col2im(Tensor(c), x.shape, (3, 3), stride, pad).data).sum())
        assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs))


def test_reduce_examples():
    assert reduce("mean", Tensor([[1.0, 3.0], [5.0, 7.0]]), (0, 1)).item() == 4.0
    t = Tensor([[1.0, 2.0]])
    copy = reduce("sum", t, ())
    np.testing.assert_array_equal(copy.data, t.data)
    assert copy.data is not t.data


def test_reduce_mean_spatial_loop_oracle(rng):
    x = rng.standard_normal((2, 4, 5, 5))
    got = reduce("mean", Tensor(x), (2, 3)).data
    ref = np.zeros((2, 4))
    for n in range(2):
        for c in range(4):
            acc = 0.0
            for i in range(5):
                for j in range(5):
                    acc += x[n, c, i, j]
            ref[n, c] = acc / 25
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_reduce_keep_and_max():
    t = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert reduce("sum", t, 1, keep=True).shape == (2, 1)
    np.testing.assert_array_equal(reduce("max", t, 0).data, [3, 4, 5])


@pytest.mark.parametrize("axes", [(2,), (0, 0), (-3,)])
def test_reduce_invalid_axis(axes):
    with pytest.raises(InvalidAxis):
        reduce("sum", Tensor(np.ones((2, 2))), axes)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.data())
def test_reduce_shape_is_function_of_input_shape(shape, data):
    axes = data.draw(st.sets(st.integers(0, len(shape) - 1)))
    keep = data.draw(st.booleans())
    out = reduce("sum", Tensor(np.ones(shape)), tuple(axes), keep)
    if not axes:
        assert out.shape == tuple(shape)
    else:
        assert out.shape == np.ones(shape).sum(axis=tuple(axes), keepdims=keep).shape


def test_elementwise_bitwise_repeatable(rng):
    a = Tensor(rng.standard_normal((3, 4)).astype(np.float32))
    b = Tensor(rng.standard_normal((4,)).astype(np.float32))
    r1 = elementwise("add", a, b).data
    r2 = elementwise("add", a, b).data
    assert r1.tobytes() == r2.tobytes()
    np.testing.assert_array_equal(elementwise("add", a, b).data, elementwise("add", b, a).data)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_tensor_bytes_roundtrip(rng, dtype):
    t = Tensor(rng.standard_normal((2, 3, 4)).astype(dtype))
    buf = tensor_to_bytes(t) + b"tail"
    back, off = tensor_from_bytes(buf)
    assert back.dtype == dtype and back.data.tobytes() == t.data.tobytes()
    assert buf[off:] == b"tail"


def test_tensor_bytes_truncated(rng):
    buf = tensor_to_bytes(Tensor(rng.standard_normal(10)))
    with pytest.raises(ValueError):
        tensor_from_bytes(buf[:-3])
