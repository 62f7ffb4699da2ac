"""Binary PPM (P6, maxval 255) codec, plus an optional Pillow adapter."""

from __future__ import annotations

import os

import numpy as np


class UndecodableImage(ValueError):
    def __init__(self, paths, reason=""):
        if isinstance(paths, (str, os.PathLike)):
            paths = [paths]
        self.paths = [str(p) for p in paths]
        msg = "cannot decode: " + ", ".join(self.paths[:5])
        if len(self.paths) > 5:
            msg += f" (+{len(self.paths) - 5} more)"
        super().__init__(f"{msg}{': ' + reason if reason else ''}")


PPM_EXTS = (".ppm",)
PIL_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


def _tokens(buf: bytes, count: int):
    """Split the first ``count`` whitespace-separated header tokens, skipping comments."""
    out, i, n = [], 0, len(buf)
    while len(out) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise ValueError("truncated header")
        out.append(buf[start:i])
    return out, i + 1  # exactly one whitespace byte precedes the raster


def decode_ppm(buf: bytes) -> np.ndarray:
    """Decode P6 bytes to an [H, W, 3] uint8 array."""
    (magic, w, h, maxval), offset = _tokens(buf, 4)
    if magic != b"P6":
        raise ValueError(f"not a binary PPM (magic {magic!r})")
    w, h, maxval = int(w), int(h), int(maxval)
    if w < 1 or h < 1 or maxval != 255:
        raise ValueError(f"unsupported geometry {w}x{h} maxval {maxval}")
    need = w * h * 3
    raster = buf[offset:offset + need]
    if len(raster) != need:
        raise ValueError("truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected [H,W,3] uint8, got {img.shape} {img.dtype}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def read_image(path) -> np.ndarray:
    """Decode an image file to [H, W, 3] uint8 RGB."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext in PPM_EXTS:
            with open(path, "rb") as fh:
                return decode_ppm(fh.read())
        if ext in PIL_EXTS:
            from PIL import Image

            with Image.open(path) as im:
                return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except ImportError as exc:
        raise UndecodableImage(path, "Pillow is required for this format") from exc
    except (OSError, ValueError) as exc:
        raise UndecodableImage(path, str(exc)) from exc
    raise UndecodableImage(path, f"unsupported extension {ext!r}")


def write_ppm(path, img: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))


def supported_extensions():
    try:
        import PIL  # noqa: F401
    except ImportError:
        return PPM_EXTS
    return PPM_EXTS + PIL_EXTS
