"""Model graphs: the residual-SE CustomCNN plus structural ResNet50 / VGG16."""

from __future__ import annotations

import numpy as np

from ..autograd import Parameter
from ..tensor import ShapeMismatch, Tensor
from .layers import (AdaptiveAvgPool2d, BatchNorm2d, Bottleneck, Context, Conv2d, Dropout,
                     Flatten, GlobalAvgPool, Linear, MaxPool2d, Module, ReLU, ResidualSEBlock,
                     Sequential)

MODEL_KINDS = ("custom", "resnet50", "vgg16")
MIN_SPATIAL = 8


class InvalidConfig(ValueError):
    pass


class UnsupportedModel(ValueError):
    pass


class SpatialTooSmall(ValueError):
    pass


class ModelGraph:
    """A layer tree with uniquely named parameters.

    ``forward`` takes ``mode`` ("train" or "eval"); dropout masks in train mode
    come from ``self.rng``, which is seeded at construction.
    """

    def __init__(self, root: Module, kind: str, num_classes: int, base_channels: int | None = None,
                 config: dict | None = None, seed: int = 0):
        self.root = root
        self.kind = kind
        self.num_classes = num_classes
        self.base_channels = base_channels
        self.config = dict(config or {})
        self.rng = np.random.default_rng(seed)
        self._rename()

    def _rename(self):
        seen = set()
        for name, p in self.root.named_parameters():
            if name in seen:
                raise InvalidConfig(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name

    @property
    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.root.named_parameters()]

    def named_parameters(self):
        return list(self.root.named_parameters())

    def named_buffers(self):
        return list(self.root.named_buffers())

    def state(self) -> dict[str, np.ndarray]:
        """Every tensor needed to reproduce eval-mode outputs, by name."""
        out = {name: p.data for name, p in self.root.named_parameters()}
        out.update(self.root.named_buffers())
        return out

    def load_state(self, state: dict[str, np.ndarray]):
        params = dict(self.root.named_parameters())
        buffers = dict(self.root.named_buffers())
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))[:3]
            extra = sorted(set(state) - expected)[:3]
            raise KeyError(f"state mismatch; missing {missing}, unexpected {extra}")
        for name, arr in state.items():
            target = params[name].data if name in params else buffers[name]
            if target.shape != arr.shape:
                raise ShapeMismatch(f"{name}: expected {target.shape}, got {arr.shape}")
            if name in params:
                params[name].set_data(np.array(arr, dtype=target.dtype))
            else:
                target[...] = arr

    def astype(self, dtype) -> "ModelGraph":
        """Convert parameters and buffers in place (float64 for gradient checks)."""
        for _, mod in self.root.named_modules():
            for p in mod._params.values():
                p.set_data(p.data.astype(dtype))
            for key, b in mod._buffers.items():
                mod._buffers[key] = b.astype(dtype)
        return self

    def forward(self, x: Tensor, mode: str = "eval") -> Tensor:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeMismatch(f"expected [N,3,H,W] input, got {x.shape}")
        if self.kind == "custom" and min(x.shape[2:]) < MIN_SPATIAL:
            raise SpatialTooSmall(f"spatial size {x.shape[2:]} below {MIN_SPATIAL}x{MIN_SPATIAL}")
        return self.root(x, Context(training=mode == "train", rng=self.rng))

    __call__ = forward


def forward(model: ModelGraph, x: Tensor, mode: str = "eval") -> Tensor:
    return model.forward(x, mode)


def build_custom_cnn(base_channels: int = 32, num_classes: int = 2, head_dropout: float = 0.5,
                     block_dropout: float = 0.1, seed: int = 0,
                     allow_narrow: bool = False) -> ModelGraph:
    """Stem, four residual-SE stages (C, 2C, 4C, 4C; strides 1, 2, 2, 2), GAP, MLP head.

    ``base_channels`` below 16 is rejected unless ``allow_narrow`` is set; the
    narrow variants (SE hidden width clamped to 1) exist for fast gradient checks.
    """
    c = base_channels
    if num_classes < 2:
        raise InvalidConfig(f"num_classes must be >= 2, got {num_classes}")
    if c < 1 or (c < 16 and not allow_narrow):
        raise InvalidConfig(f"base_channels must be >= 16, got {c}")
    root = Sequential(
        Sequential(Conv2d(3, c, 3, 1, 1), BatchNorm2d(c), ReLU(), names=["conv", "bn", "relu"]),
        ResidualSEBlock(c, c, 1, block_dropout),
        ResidualSEBlock(c, 2 * c, 2, block_dropout),
        ResidualSEBlock(2 * c, 4 * c, 2, block_dropout),
        ResidualSEBlock(4 * c, 4 * c, 2, block_dropout),
        GlobalAvgPool(),
        Sequential(Dropout(head_dropout), Linear(4 * c, 128), ReLU(), Linear(128, num_classes),
                   names=["drop", "fc1", "relu", "fc2"]),
        names=["stem", "stage1", "stage2", "stage3", "stage4", "pool", "head"],
    )
    config = {"head_dropout": head_dropout, "block_dropout": block_dropout}
    return ModelGraph(root, "custom", num_classes, c, config, seed)


def build_resnet50(num_classes: int = 2, seed: int = 0) -> ModelGraph:
    """Bottleneck 3-4-6-3 layout with a ``num_classes``-wide final layer."""
    if num_classes < 2:
        raise InvalidConfig(f"num_classes must be >= 2, got {num_classes}")
    layers = []
    in_ch = 64
    for width, blocks, stride in ((64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)):
        stage = []
        for i in range(blocks):
            stage.append(Bottleneck(in_ch, width, stride if i == 0 else 1))
            in_ch = width * Bottleneck.expansion
        layers.append(Sequential(*stage))
    root = Sequential(
        Conv2d(3, 64, 7, 2, 3), BatchNorm2d(64), ReLU(), MaxPool2d(3, 2, 1),
        *layers, GlobalAvgPool(), Linear(in_ch, num_classes),
        names=["conv1", "bn1", "relu", "maxpool", "layer1", "layer2", "layer3", "layer4",
               "avgpool", "fc"],
    )
    return ModelGraph(root, "resnet50", num_classes, None, {}, seed)


VGG16_CFG = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M",
             512, 512, 512, "M")


def build_vgg16(num_classes: int = 2, seed: int = 0) -> ModelGraph:
    """13 conv layers (with bias) in five pooled groups, then 3 fully connected layers."""
    if num_classes < 2:
        raise InvalidConfig(f"num_classes must be >= 2, got {num_classes}")
    feats = []
    in_ch = 3
    for v in VGG16_CFG:
        if v == "M":
            feats.append(MaxPool2d(2, 2))
        else:
            feats += [Conv2d(in_ch, v, 3, 1, 1, bias=True), ReLU()]
            in_ch = v
    classifier = Sequential(
        Linear(512 * 7 * 7, 4096), ReLU(), Dropout(0.5),
        Linear(4096, 4096), ReLU(), Dropout(0.5),
        Linear(4096, num_classes),
    )
    root = Sequential(Sequential(*feats), AdaptiveAvgPool2d((7, 7)), Flatten(), classifier,
                      names=["features", "avgpool", "flatten", "classifier"])
    return ModelGraph(root, "vgg16", num_classes, None, {}, seed)


def build_model(kind: str, num_classes: int, base_channels: int = 32, head_dropout: float = 0.5,
                block_dropout: float = 0.1, seed: int = 0) -> ModelGraph:
    if kind == "custom":
        return build_custom_cnn(base_channels, num_classes, head_dropout, block_dropout, seed)
    if kind == "resnet50":
        return build_resnet50(num_classes, seed)
    if kind == "vgg16":
        return build_vgg16(num_classes, seed)
    raise InvalidConfig(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def freeze_for_transfer(model: ModelGraph, head_dropout: float = 0.5) -> ModelGraph:
    """Freeze everything but the final linear layer.

    ResNet50 additionally gets a dropout in front of its replaced head, after
    global pooling.
    """
    if model.kind == "resnet50":
        root = model.root
        fc = root._children["fc"]
        if not isinstance(fc, Sequential):
            root._children["fc"] = Sequential(Dropout(head_dropout), fc)
        head = root._children["fc"][1]
    elif model.kind == "vgg16":
        head = model.root._children["classifier"][6]
    else:
        raise UnsupportedModel(f"transfer freezing is defined for resnet50/vgg16, not {model.kind}")
    head_params = {id(p) for p in head._params.values()}
    for p in model.parameters:
        p.trainable = id(p) in head_params
    model.config["transfer"] = True
    model.config["head_dropout"] = head_dropout
    model._rename()
    return model


def kaiming_init(model: ModelGraph, seed: int = 0) -> ModelGraph:
    """He-normal conv/linear weights (std = sqrt(2 / fan_in)); zero biases; BN at identity.

    Draws happen in parameter-name order from one seeded generator, so equal
    seeds give bitwise-equal parameters.
    """
    rng = np.random.default_rng(seed)
    for _, mod in model.root.named_modules():
        if isinstance(mod, (Conv2d, Linear)):
            std = np.sqrt(2.0 / mod.fan_in)
            w = mod.weight
            w.data[...] = rng.standard_normal(w.shape, dtype=w.dtype) * w.dtype.type(std)
            if mod.bias is not None:
                mod.bias.data[...] = 0
        elif isinstance(mod, BatchNorm2d):
            mod.weight.data[...] = 1
            mod.bias.data[...] = 0
            mod._buffers["running_mean"][...] = 0
            mod._buffers["running_var"][...] = 1
    return model


def param_count(model: ModelGraph) -> tuple[int, int]:
    """(total, trainable) scalar counts."""
    total = trainable = 0
    for p in model.parameters:
        total += p.size
        if p.trainable:
            trainable += p.size
    return total, trainable


def size_mb(model: ModelGraph) -> float:
    """Float32 footprint of all parameters in MiB, to 2 decimals."""
    return round(4 * param_count(model)[0] / 2 ** 20, 2)
