"""Time the compiled im2col/col2im kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Also times a full conv2d forward+backward through each backend by swapping
the functions that ``secnn.tensor`` dispatches to.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from secnn import _kernels_py, kernels
from secnn import functional as F
from secnn.autograd import Parameter, Tape, backward
from secnn.tensor import Tensor, conv_output_size

try:
    from secnn import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

# (N, C, H, W, k, stride, pad)
SHAPES = [
    (2, 3, 8, 8, 3, 1, 1),
    (8, 16, 32, 32, 3, 1, 1),
    (32, 16, 64, 64, 3, 1, 1),
    (32, 64, 32, 32, 3, 2, 1),
]


def _best(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def _use(backend):
    kernels.im2col_raw = backend.im2col
    kernels.col2im_raw = backend.col2im


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.insert(0, ("cython", _kernels_c))
    else:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"default backend: {kernels.BACKEND}")
    rng = np.random.default_rng(0)
    head = f"{'shape (N,C,H,W,k,s,p)':<26} {'op':<14}" + "".join(f"{n:>12}" for n, _ in backends)
    print(head + ("   speedup" if len(backends) == 2 else ""))
    saved = (kernels.im2col_raw, kernels.col2im_raw)
    try:
        for n, c, h, w, k, s, p in SHAPES:
            x = rng.standard_normal((n, c, h, w)).astype(np.float32)
            oh, ow = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
            cols = rng.standard_normal((n, c * k * k, oh * ow)).astype(np.float32)
            weight = Parameter(rng.standard_normal((c, c, k, k)).astype(np.float32))
            xt = Tensor(x)

            def conv_fb():
                with Tape() as tape:
                    loss = F.sum(F.conv2d(xt, weight, None, s, p))
                backward(tape, loss)

            rows = {"im2col": [], "col2im": [], "conv fwd+bwd": []}
            for _, mod in backends:
                rows["im2col"].append(_best(lambda: mod.im2col(x, k, k, s, p, oh, ow), args.repeat))
                rows["col2im"].append(
                    _best(lambda: mod.col2im(cols, c, h, w, k, k, s, p, oh, ow), args.repeat))
                _use(mod)
                rows["conv fwd+bwd"].append(_best(conv_fb, args.repeat))
            label = f"({n},{c},{h},{w},{k},{s},{p})"
            for op, times in rows.items():
                line = f"{label:<26} {op:<14}" + "".join(f"{t * 1e3:10.3f}ms" for t in times)
                if len(times) == 2:
                    line += f"  {times[1] / times[0]:7.2f}x"
                print(line)
    finally:
        kernels.im2col_raw, kernels.col2im_raw = saved


if __name__ == "__main__":
    main()
