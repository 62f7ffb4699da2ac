import os
import subprocess
import sys

import numpy as np
import pytest

from secnn import _kernels_py, kernels
from secnn.tensor import conv_output_size

compiled = pytest.importorskip("secnn._kernels", reason="compiled extension not built")

CASES = [(1, 1, 3, 3, 3, 1, 1), (2, 3, 8, 8, 3, 1, 1), (2, 3, 7, 9, 3, 2, 1), (1, 4, 5, 5, 1, 2, 0),
         (2, 2, 6, 6, 2, 2, 0), (1, 2, 4, 4, 3, 1, 2), (1, 3, 7, 7, 7, 2, 3)]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("case", CASES)
def test_backends_bitwise_equal(case, dtype):
    n, c, h, w, k, s, p = case
    rng = np.random.default_rng(sum(case))
    x = rng.standard_normal((n, c, h, w)).astype(dtype)
    oh, ow = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
    for pad_value in (0.0, -np.inf):
        a = compiled.im2col(x, k, k, s, p, oh, ow, pad_value)
        b = _kernels_py.im2col(x, k, k, s, p, oh, ow, pad_value)
        assert a.dtype == b.dtype == dtype
        assert a.tobytes() == b.tobytes()
    cols = rng.standard_normal((n, c * k * k, oh * ow)).astype(dtype)
    a = compiled.col2im(cols, c, h, w, k, k, s, p, oh, ow)
    b = _kernels_py.col2im(cols, c, h, w, k, k, s, p, oh, ow)
    assert a.tobytes() == b.tobytes()


@pytest.mark.skipif(os.environ.get("SECNN_PURE_PYTHON", "") not in ("", "0"),
                    reason="fallback forced by environment")
def test_default_backend_is_compiled():
    assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    code = "import secnn.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, SECNN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
