"""Layer zoo and the residual squeeze-and-excitation building blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import functional as F
from ..autograd import Parameter
from ..tensor import ShapeMismatch, Tensor, conv_output_size


@dataclass
class Context:
    """Per-call forward state: train/eval mode and the dropout RNG."""

    training: bool = False
    rng: np.random.Generator | None = None


class Module:
    kind = "Module"

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name, shape, decay: bool = False, fill: float = 0.0):
        p = Parameter(np.full(shape, fill, dtype=np.float32) if fill else
                      np.zeros(shape, dtype=np.float32), decay_eligible=decay)
        self._params[name] = p
        return p

    def add_child(self, name: str, child: "Module"):
        self._children[name] = child
        return child

    def children(self):
        return self._children.items()

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, child in self._children.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = ""):
        for name, mod in self.named_modules(prefix):
            for pname, p in mod._params.items():
                yield (f"{name}.{pname}" if name else pname), p

    def named_buffers(self, prefix: str = ""):
        for name, mod in self.named_modules(prefix):
            for bname, b in mod._buffers.items():
                yield (f"{name}.{bname}" if name else bname), b

    def forward(self, x: Tensor, ctx: Context) -> Tensor:
        raise NotImplementedError

    def __call__(self, x, ctx):
        return self.forward(x, ctx)

    def out_shape(self, shape: tuple) -> tuple:
        return shape

    def summarize(self, shape: tuple, prefix: str):
        """Rows of (name, kind, output shape, own params) for this subtree."""
        out = self.out_shape(shape)
        own = list(self._params.values())
        return [(prefix, self.kind, out, own)], out

    def extra_repr(self) -> str:
        return ""


class Conv2d(Module):
    kind = "Conv2d"

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, padding=0, bias=False):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.weight = self.add_param("weight", (out_ch, in_ch, kernel, kernel), decay=True)
        self.bias = self.add_param("bias", (out_ch,)) if bias else None

    @property
    def fan_in(self):
        return self.in_ch * self.kernel * self.kernel

    def forward(self, x, ctx):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def out_shape(self, shape):
        n, c, h, w = shape
        if c != self.in_ch:
            raise ShapeMismatch(f"Conv2d expects {self.in_ch} channels, got {c}")
        return (n, self.out_ch, conv_output_size(h, self.kernel, self.stride, self.padding),
                conv_output_size(w, self.kernel, self.stride, self.padding))

    def extra_repr(self):
        return f"{self.in_ch}->{self.out_ch}, k={self.kernel}, s={self.stride}, p={self.padding}"


class BatchNorm2d(Module):
    kind = "BatchNorm2d"

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.weight = self.add_param("weight", (channels,), fill=1.0)
        self.bias = self.add_param("bias", (channels,))
        self._buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self._buffers["running_var"] = np.ones(channels, dtype=np.float32)

    def forward(self, x, ctx):
        return F.batch_norm(x, self.weight, self.bias, self._buffers["running_mean"],
                            self._buffers["running_var"], ctx.training, self.momentum, self.eps)


class ReLU(Module):
    kind = "ReLU"

    def forward(self, x, ctx):
        return F.relu(x)


class Dropout(Module):
    kind = "Dropout"
    channelwise = False

    def __init__(self, p=0.5):
        super().__init__()
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"dropout probability must be in [0, 1], got {p}")
        self.p = p

    def forward(self, x, ctx):
        return F.dropout(x, self.p, ctx.training, ctx.rng, channelwise=self.channelwise)

    def extra_repr(self):
        return f"p={self.p}"


class Dropout2d(Dropout):
    kind = "Dropout2d"
    channelwise = True


class Linear(Module):
    kind = "Linear"

    def __init__(self, in_features, out_features, bias=True):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.weight = self.add_param("weight", (out_features, in_features), decay=True)
        self.bias = self.add_param("bias", (out_features,)) if bias else None

    @property
    def fan_in(self):
        return self.in_features

    def forward(self, x, ctx):
        return F.linear(x, self.weight, self.bias)

    def out_shape(self, shape):
        return shape[:-1] + (self.out_features,)

    def extra_repr(self):
        return f"{self.in_features}->{self.out_features}"


class GlobalAvgPool(Module):
    kind = "GlobalAvgPool"

    def forward(self, x, ctx):
        return F.global_avg_pool(x)

    def out_shape(self, shape):
        return shape[:2]


class Flatten(Module):
    kind = "Flatten"

    def forward(self, x, ctx):
        return F.flatten(x)

    def out_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))


class MaxPool2d(Module):
    kind = "MaxPool2d"

    def __init__(self, kernel, stride, padding=0):
        super().__init__()
        self.kernel, self.stride, self.padding = kernel, stride, padding

    def forward(self, x, ctx):
        return F.max_pool2d(x, self.kernel, self.stride, self.padding)

    def out_shape(self, shape):
        n, c, h, w = shape
        return (n, c, conv_output_size(h, self.kernel, self.stride, self.padding),
                conv_output_size(w, self.kernel, self.stride, self.padding))


class AdaptiveAvgPool2d(Module):
    kind = "AdaptiveAvgPool2d"

    def __init__(self, output_size):
        super().__init__()
        self.output_size = output_size

    def forward(self, x, ctx):
        return F.adaptive_avg_pool2d(x, self.output_size)

    def out_shape(self, shape):
        return shape[:2] + tuple(self.output_size)


class Sequential(Module):
    kind = "Sequential"

    def __init__(self, *layers, names=None):
        super().__init__()
        names = names or [str(i) for i in range(len(layers))]
        for name, layer in zip(names, layers):
            self.add_child(name, layer)

    def forward(self, x, ctx):
        for _, layer in self.children():
            x = layer(x, ctx)
        return x

    def out_shape(self, shape):
        for _, layer in self.children():
            shape = layer.out_shape(shape)
        return shape

    def summarize(self, shape, prefix):
        rows = []
        for name, layer in self.children():
            sub, shape = layer.summarize(shape, f"{prefix}.{name}" if prefix else name)
            rows.extend(sub)
        return rows, shape

    def __getitem__(self, key):
        return self._children[str(key)]


class SEBlock(Module):
    """Channel gate: spatial mean, bottleneck MLP (ReLU), sigmoid, rescale."""

    kind = "SEBlock"

    def __init__(self, channels, reduction=16):
        super().__init__()
        if channels < 1:
            raise ValueError("SEBlock needs at least one channel")
        self.channels = channels
        self.hidden = max(1, channels // reduction)
        self.fc1 = self.add_child("fc1", Linear(channels, self.hidden))
        self.fc2 = self.add_child("fc2", Linear(self.hidden, channels))

    def gate(self, x, ctx):
        s = F.global_avg_pool(x)
        s = F.relu(self.fc1(s, ctx))
        return F.sigmoid(self.fc2(s, ctx))

    def forward(self, x, ctx):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeMismatch(f"SEBlock expects [N,{self.channels},H,W], got {x.shape}")
        s = self.gate(x, ctx)
        return F.mul(x, F.reshape(s, s.shape + (1, 1)))

    def summarize(self, shape, prefix):
        rows = [(f"{prefix}.fc1", "Linear", (shape[0], self.hidden), list(self.fc1._params.values())),
                (f"{prefix}.fc2", "Linear", (shape[0], self.channels),
                 list(self.fc2._params.values())),
                (prefix, self.kind, shape, [])]
        return rows, shape


class ResidualSEBlock(Module):
    """conv-BN-ReLU-Dropout2d-conv-BN-SE, added to the skip path, then ReLU.

    The skip is the identity when stride is 1 and widths match, otherwise a
    bias-free 1x1 convolution followed by batch norm.
    """

    kind = "ResidualSEBlock"

    def __init__(self, in_ch, out_ch, stride=1, block_dropout=0.1, reduction=16):
        super().__init__()
        if stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {stride}")
        self.in_ch, self.out_ch, self.stride = in_ch, out_ch, stride
        self.conv1 = self.add_child("conv1", Conv2d(in_ch, out_ch, 3, stride, 1))
        self.bn1 = self.add_child("bn1", BatchNorm2d(out_ch))
        self.drop = self.add_child("drop", Dropout2d(block_dropout))
        self.conv2 = self.add_child("conv2", Conv2d(out_ch, out_ch, 3, 1, 1))
        self.bn2 = self.add_child("bn2", BatchNorm2d(out_ch))
        self.se = self.add_child("se", SEBlock(out_ch, reduction))
        self.shortcut = None
        if stride != 1 or in_ch != out_ch:
            self.shortcut = self.add_child("shortcut", Sequential(
                Conv2d(in_ch, out_ch, 1, stride, 0), BatchNorm2d(out_ch), names=["conv", "bn"]))

    def forward(self, x, ctx):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"block expects [N,{self.in_ch},H,W], got {x.shape}")
        y = F.relu(self.bn1(self.conv1(x, ctx), ctx))
        y = self.drop(y, ctx)
        y = self.bn2(self.conv2(y, ctx), ctx)
        y = self.se(y, ctx)
        skip = x if self.shortcut is None else self.shortcut(x, ctx)
        return F.relu(F.add(y, skip))

    def out_shape(self, shape):
        return self.conv1.out_shape(shape)

    def summarize(self, shape, prefix):
        rows = []
        inner = Sequential(self.conv1, self.bn1, ReLU(), self.drop, self.conv2, self.bn2,
                           names=["conv1", "bn1", "relu", "drop", "conv2", "bn2"])
        sub, out = inner.summarize(shape, prefix)
        rows.extend(sub)
        sub, _ = self.se.summarize(out, f"{prefix}.se")
        rows.extend(sub)
        if self.shortcut is not None:
            sub, _ = self.shortcut.summarize(shape, f"{prefix}.shortcut")
            rows.extend(sub)
        rows.append((prefix, self.kind, out, []))
        return rows, out


class Bottleneck(Module):
    """ResNet-50 bottleneck: 1x1 reduce, 3x3 (carries the stride), 1x1 expand."""

    kind = "Bottleneck"
    expansion = 4

    def __init__(self, in_ch, width, stride=1):
        super().__init__()
        out_ch = width * self.expansion
        self.in_ch, self.out_ch = in_ch, out_ch
        self.conv1 = self.add_child("conv1", Conv2d(in_ch, width, 1))
        self.bn1 = self.add_child("bn1", BatchNorm2d(width))
        self.conv2 = self.add_child("conv2", Conv2d(width, width, 3, stride, 1))
        self.bn2 = self.add_child("bn2", BatchNorm2d(width))
        self.conv3 = self.add_child("conv3", Conv2d(width, out_ch, 1))
        self.bn3 = self.add_child("bn3", BatchNorm2d(out_ch))
        self.downsample = None
        if stride != 1 or in_ch != out_ch:
            self.downsample = self.add_child("downsample", Sequential(
                Conv2d(in_ch, out_ch, 1, stride), BatchNorm2d(out_ch)))

    def forward(self, x, ctx):
        y = F.relu(self.bn1(self.conv1(x, ctx), ctx))
        y = F.relu(self.bn2(self.conv2(y, ctx), ctx))
        y = self.bn3(self.conv3(y, ctx), ctx)
        skip = x if self.downsample is None else self.downsample(x, ctx)
        return F.relu(F.add(y, skip))

    def out_shape(self, shape):
        return self.conv3.out_shape(self.conv2.out_shape(self.conv1.out_shape(shape)))

    def summarize(self, shape, prefix):
        inner = Sequential(self.conv1, self.bn1, self.conv2, self.bn2, self.conv3, self.bn3,
                           names=["conv1", "bn1", "conv2", "bn2", "conv3", "bn3"])
        rows, out = inner.summarize(shape, prefix)
        if self.downsample is not None:
            sub, _ = self.downsample.summarize(shape, f"{prefix}.downsample")
            rows.extend(sub)
        return rows, out
