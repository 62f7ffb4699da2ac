"""Deterministic, class-separable PPM image sets for exercising the pipeline."""

from __future__ import annotations

import colorsys
import os

import numpy as np

from .ppm import write_ppm


class IoFailure(OSError):
    pass


def class_color(k: int, num_classes: int) -> np.ndarray:
    r, g, b = colorsys.hsv_to_rgb(k / num_classes, 0.75, 0.85)
    return np.array([r, g, b]) * 255.0


def synth_image(k: int, num_classes: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Class hue + class-specific stripe texture + per-image shift and pixel noise."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    angle = np.pi * k / num_classes
    freq = 2.0 + 1.5 * k
    phase = rng.uniform(0, 2 * np.pi)
    stripes = np.sin(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
    img = class_color(k, num_classes)[None, None, :] + 25.0 * stripes[..., None]
    img = img + rng.normal(0.0, 8.0, size=3)[None, None, :]
    img = img + rng.normal(0.0, 12.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def gen_synthetic(root_dir, num_classes: int = 2, per_class: int = 20, image_size: int = 64,
                  seed: int = 0) -> list[str]:
    """Write ``root_dir/class_XX/img_XXXX.ppm``; returns the written paths."""
    if num_classes < 2 or per_class < 1 or image_size < 1:
        raise ValueError("need num_classes >= 2, per_class >= 1, image_size >= 1")
    rng = np.random.default_rng(seed)
    width = max(2, len(str(num_classes - 1)))
    paths = []
    try:
        for k in range(num_classes):
            folder = os.path.join(os.fspath(root_dir), f"class_{k:0{width}d}")
            os.makedirs(folder, exist_ok=True)
            for i in range(per_class):
                path = os.path.join(folder, f"img_{i:04d}.ppm")
                write_ppm(path, synth_image(k, num_classes, image_size, rng))
                paths.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write synthetic dataset under {root_dir}: {exc}") from exc
    return paths
