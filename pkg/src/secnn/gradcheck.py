"""Float64 finite-difference checks over layers, blocks and the full CustomCNN.

Each unit reduces its output to a scalar with a fixed random projection
``sum(out * R)`` so every output coordinate contributes to the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .autograd import check_gradients
from .nn import (BatchNorm2d, Bottleneck, Context, Conv2d, Linear, ResidualSEBlock, SEBlock,
                 build_custom_cnn, kaiming_init)
from .tensor import Tensor

SCOPES = ("layers", "blocks", "model")
DEFAULT_TOLERANCE = 1e-4


@dataclass
class UnitResult:
    name: str
    max_rel_err: float
    passed: bool
    checked: int


def _projected(out: Tensor, proj: dict) -> Tensor:
    r = proj.get(out.shape)
    if r is None:
        r = proj[out.shape] = Tensor(proj["rng"].standard_normal(out.shape))
    return F.sum(F.mul(out, r))


def _to64(module):
    for _, mod in module.named_modules():
        for p in mod._params.values():
            p.set_data(p.data.astype(np.float64))
        for key, b in mod._buffers.items():
            mod._buffers[key] = b.astype(np.float64)
    return module


def _init(module, rng):
    for _, mod in module.named_modules():
        for p in mod._params.values():
            p.data[...] = rng.standard_normal(p.shape) * 0.5
        if isinstance(mod, BatchNorm2d):
            mod.weight.data[...] = 1 + 0.2 * rng.standard_normal(mod.channels)
            mod._buffers["running_mean"][...] = 0.1 * rng.standard_normal(mod.channels)
            mod._buffers["running_var"][...] = 1 + 0.5 * rng.random(mod.channels)
    return module


def _module_unit(name, module, x_shape, training, rng, tol, max_coords=None):
    _to64(module)
    _init(module, rng)
    x = Tensor(rng.standard_normal(x_shape))
    params = [p for _, p in module.named_parameters()]
    proj = {"rng": np.random.default_rng(rng.integers(1 << 31))}
    ctx = Context(training=training)

    def loss():
        return _projected(module(x, ctx), proj)
    rep = check_gradients(loss, [x] + params, tol, max_coords)
    return UnitResult(name, rep.max_rel_err, rep.passed, rep.checked)


def _fn_unit(name, fn, shapes, rng, tol, positive=False):
    xs = [Tensor(np.abs(rng.standard_normal(s)) + 0.5 if positive else rng.standard_normal(s))
          for s in shapes]
    proj = {"rng": np.random.default_rng(rng.integers(1 << 31))}

    def loss():
        return _projected(fn(*xs), proj)
    rep = check_gradients(loss, xs, tol)
    return UnitResult(name, rep.max_rel_err, rep.passed, rep.checked)


def layer_units(seed: int = 0, tol: float = DEFAULT_TOLERANCE):
    rng = np.random.default_rng(seed)
    out = [
        _fn_unit("add(broadcast)", F.add, [(2, 3, 4), (3, 1)], rng, tol),
        _fn_unit("sub(broadcast)", F.sub, [(2, 3), (1, 3)], rng, tol),
        _fn_unit("mul(broadcast)", F.mul, [(2, 3, 4), (2, 1, 4)], rng, tol),
        _fn_unit("relu", F.relu, [(4, 5)], rng, tol),
        _fn_unit("sigmoid", F.sigmoid, [(4, 5)], rng, tol),
        _fn_unit("exp", F.exp, [(4, 5)], rng, tol),
        _fn_unit("log", F.log, [(4, 5)], rng, tol, positive=True),
        _fn_unit("matmul", F.matmul, [(3, 4), (4, 2)], rng, tol),
        _fn_unit("mean(spatial)", lambda t: F.mean(t, (2, 3)), [(2, 3, 4, 4)], rng, tol),
        _fn_unit("sum(keep)", lambda t: F.sum(t, (1,), keep=True), [(2, 3, 4)], rng, tol),
        _fn_unit("max_pool2d", lambda t: F.max_pool2d(t, 3, 2, 1), [(1, 2, 6, 6)], rng, tol),
        _fn_unit("adaptive_avg_pool2d", lambda t: F.adaptive_avg_pool2d(t, (3, 2)),
                 [(1, 2, 7, 5)], rng, tol),
        _fn_unit("dropout(fixed mask)",
                 lambda t: F.dropout(t, 0.3, True, np.random.default_rng(7)), [(3, 4)], rng, tol),
        _fn_unit("dropout2d(fixed mask)",
                 lambda t: F.dropout(t, 0.3, True, np.random.default_rng(7), channelwise=True),
                 [(2, 4, 3, 3)], rng, tol),
        _module_unit("conv2d 3x3 s1 p1", Conv2d(3, 4, 3, 1, 1), (2, 3, 6, 6), True, rng, tol),
        _module_unit("conv2d 3x3 s2 p1", Conv2d(3, 4, 3, 2, 1), (2, 3, 7, 7), True, rng, tol),
        _module_unit("conv2d 1x1 s2 +bias", Conv2d(3, 4, 1, 2, 0, bias=True), (2, 3, 5, 5), True,
                     rng, tol),
        _module_unit("batchnorm2d train", BatchNorm2d(3), (4, 3, 3, 3), True, rng, tol),
        _module_unit("batchnorm2d eval", BatchNorm2d(3), (4, 3, 3, 3), False, rng, tol),
        _module_unit("linear", Linear(5, 3), (4, 5), True, rng, tol),
        _module_unit("se gate", SEBlock(8, 4), (2, 8, 3, 3), True, rng, tol),
    ]
    logits = Tensor(rng.standard_normal((6, 5)) * 3)
    labels = rng.integers(0, 5, size=6)
    rep = check_gradients(lambda: F.cross_entropy_loss(logits, labels), [logits], 1e-6)
    out.append(UnitResult("softmax cross-entropy", rep.max_rel_err, rep.passed, rep.checked))
    return out


def block_units(seed: int = 0, tol: float = DEFAULT_TOLERANCE):
    rng = np.random.default_rng(seed + 1)
    return [
        _module_unit("se block (r=16)", SEBlock(32), (2, 32, 3, 3), True, rng, tol, 24),
        _module_unit("residual-se identity skip", ResidualSEBlock(8, 8, 1, 0.0), (1, 8, 6, 6),
                     True, rng, tol, 24),
        _module_unit("residual-se projection skip", ResidualSEBlock(4, 8, 2, 0.0), (2, 4, 6, 6),
                     True, rng, tol, 24),
        _module_unit("bottleneck", Bottleneck(8, 4, 2), (2, 8, 5, 5), True, rng, tol, 24),
    ]


def model_units(seed: int = 0, tol: float = DEFAULT_TOLERANCE, base_channels: int = 8,
                size: int = 16, max_coords: int = 16):
    model = build_custom_cnn(base_channels, 2, head_dropout=0.0, block_dropout=0.0,
                             allow_narrow=True)
    kaiming_init(model, seed)
    model.astype(np.float64)
    rng = np.random.default_rng(seed + 2)
    # move off the init point: with N=1 in train-mode BN the spatial mean of a
    # BN output equals its shift, so zero shifts would park every SE ReLU on its kink
    for p in model.parameters:
        if p.name.endswith("bias"):
            p.data[...] = 0.3 * rng.standard_normal(p.shape)
        elif p.ndim == 1:
            p.data[...] = 1 + 0.2 * rng.standard_normal(p.shape)
    x = Tensor(rng.standard_normal((1, 3, size, size)))
    labels = np.array([1])

    def loss():
        return F.cross_entropy_loss(model.forward(x, "train"), labels)
    rep = check_gradients(loss, [x] + model.parameters, tol, max_coords, seed)
    name = f"custom_cnn C={base_channels} input 1x3x{size}x{size}"
    return [UnitResult(name, rep.max_rel_err, rep.passed, rep.checked)]


def run_scope(scope: str, seed: int = 0, tol: float = DEFAULT_TOLERANCE):
    if scope == "layers":
        return layer_units(seed, tol)
    if scope == "blocks":
        return block_units(seed, tol)
    if scope == "model":
        return model_units(seed, tol)
    raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
