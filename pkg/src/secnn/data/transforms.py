"""Resize, augmentation and normalization for [H, W, 3] images."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..tensor import Tensor
from .ppm import read_image

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass
class AugmentSpec:
    hflip_prob: float = 0.5
    rotation_degrees: float = 15.0
    brightness: tuple = (0.8, 1.2)
    contrast: tuple = (0.8, 1.2)
    saturation: tuple = (0.8, 1.2)
    resize: tuple = (224, 224)
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation", "resize", "mean", "std"):
            setattr(self, name, tuple(getattr(self, name)))
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
        if any(s <= 0 for s in self.std):
            raise ValueError("normalization std must be positive")
        if len(self.resize) != 2 or min(self.resize) < 1:
            raise ValueError(f"bad resize target {self.resize}")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        return cls(**d)


def _axis_coords(out: int, size: int):
    """Source indices and weights for half-pixel-centred linear interpolation."""
    src = (np.arange(out, dtype=np.float64) + 0.5) * (size / out) - 0.5
    src = np.clip(src, 0, size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, size - 1)
    frac = (src - lo).astype(np.float32)
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, size: tuple) -> np.ndarray:
    """Bilinear resize of a float [H, W, C] image to ``size`` = (H', W')."""
    h, w = img.shape[:2]
    oh, ow = size
    if (h, w) == (oh, ow):
        return img
    lo, hi, f = _axis_coords(oh, h)
    rows = img[lo] * (1 - f)[:, None, None] + img[hi] * f[:, None, None]
    lo, hi, f = _axis_coords(ow, w)
    return rows[:, lo] * (1 - f)[None, :, None] + rows[:, hi] * f[None, :, None]


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Counter-clockwise rotation about the centre, bilinear, black outside."""
    if degrees == 0:
        return img
    h, w = img.shape[:2]
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64) - cy,
                         np.arange(w, dtype=np.float64) - cx, indexing="ij")
    # inverse map: output pixel -> source location (image y axis points down)
    sx = cos * xx - sin * yy + cx
    sy = sin * xx + cos * yy + cy
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0).astype(np.float32)[..., None]
    fy = (sy - y0).astype(np.float32)[..., None]
    out = np.zeros_like(img)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yi, xi = y0 + dy, x0 + dx
            ok = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
            vals = np.zeros_like(img)
            vals[ok] = img[yi[ok], xi[ok]]
            out += vals * wy * wx
    return out


def color_jitter(img: np.ndarray, brightness: float, contrast: float, saturation: float):
    """Brightness, then contrast, then saturation on a [0, 255] float image."""
    img = img * brightness
    gray_mean = float((img @ _LUMA).mean())
    img = (img - gray_mean) * contrast + gray_mean
    gray = (img @ _LUMA)[..., None]
    img = (img - gray) * saturation + gray
    return np.clip(img, 0.0, 255.0)


def normalize(img01: np.ndarray, mean, std) -> np.ndarray:
    """[H, W, 3] in [0, 1] -> [3, H, W] standardized per channel."""
    m = np.asarray(mean, dtype=np.float32)
    s = np.asarray(std, dtype=np.float32)
    return ((img01 - m) / s).transpose(2, 0, 1)


def denormalize(chw: np.ndarray, mean, std) -> np.ndarray:
    m = np.asarray(mean, dtype=np.float32)[:, None, None]
    s = np.asarray(std, dtype=np.float32)[:, None, None]
    return (chw * s + m).transpose(1, 2, 0)


def transform_array(img: np.ndarray, spec: AugmentSpec, mode: str = "eval",
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """uint8 [H, W, 3] -> float32 [3, H', W'] following the training pipeline."""
    x = resize_bilinear(img.astype(np.float32), spec.resize)
    if mode == "train":
        if rng is None:
            raise ValueError("train-mode transforms need an rng")
        # always draw the same number of variates so streams stay aligned
        flip = rng.random() < spec.hflip_prob
        angle = rng.uniform(-spec.rotation_degrees, spec.rotation_degrees)
        b = rng.uniform(*spec.brightness)
        c = rng.uniform(*spec.contrast)
        s = rng.uniform(*spec.saturation)
        if flip:
            x = hflip(x)
        x = rotate(x, angle)
        x = color_jitter(x, b, c, s)
    elif mode != "eval":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    out = normalize(x / np.float32(255.0), spec.mean, spec.std)
    return np.ascontiguousarray(out, dtype=np.float32)


def load_and_transform(sample, spec: AugmentSpec, mode: str = "eval",
                       rng: np.random.Generator | None = None) -> Tensor:
    """Decode ``sample`` (a path or a (path, label) pair) and transform it."""
    path = sample[0] if isinstance(sample, tuple) else sample
    return Tensor(transform_array(read_image(path), spec, mode, rng))
