"""Folder-per-class dataset index, stratified split and batching."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..tensor import Tensor
from .ppm import UndecodableImage, read_image, supported_extensions
from .transforms import AugmentSpec, transform_array


class NoClasses(ValueError):
    pass


class EmptyClass(ValueError):
    pass


class EmptySplit(ValueError):
    pass


@dataclass
class DatasetIndex:
    classes: list[str]
    samples: list[tuple[str, int]]
    split: list[str]
    seed: int = 0
    val_fraction: float = 0.2
    root: str = ""

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == split]

    def subset(self, split: str) -> list[tuple[str, int]]:
        return [self.samples[i] for i in self.indices(split)]

    def labels(self, split: str) -> np.ndarray:
        return np.array([lab for _, lab in self.subset(split)], dtype=np.int64)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def to_dict(self) -> dict:
        return {"root": self.root, "classes": self.classes, "seed": self.seed,
                "val_fraction": self.val_fraction,
                "samples": [[p, c, s] for (p, c), s in zip(self.samples, self.split)]}


def val_count(n: int, val_fraction: float) -> int:
    # tolerance guards products like 0.2 * 5 landing just below an integer
    return int(math.floor(val_fraction * n + 1e-9))


def stratified_split(labels, val_fraction: float = 0.2, seed: int = 0) -> list[str]:
    """Per-class shuffle then cut: the first floor(fraction * n) go to validation."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    split = ["train"] * len(labels)
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        order = rng.permutation(members)
        for i in order[:val_count(len(members), val_fraction)]:
            split[i] = "val"
    return split


def build_index(root_dir, val_fraction: float = 0.2, seed: int = 0,
                check_decode: bool = True) -> DatasetIndex:
    """Scan ``root_dir/<class>/<image>``; classes sorted, files sorted within a class."""
    root_dir = os.fspath(root_dir)
    if not os.path.isdir(root_dir):
        raise NoClasses(f"{root_dir} is not a directory")
    classes = sorted(d for d in os.listdir(root_dir)
                     if os.path.isdir(os.path.join(root_dir, d)) and not d.startswith("."))
    if len(classes) < 2:
        raise NoClasses(f"need at least 2 class subdirectories in {root_dir}, found {len(classes)}")
    exts = supported_extensions()
    samples, bad, empty = [], [], []
    for cid, name in enumerate(classes):
        folder = os.path.join(root_dir, name)
        files = sorted(f for f in os.listdir(folder) if f.lower().endswith(exts))
        if not files:
            empty.append(name)
        for f in files:
            path = os.path.join(folder, f)
            if check_decode:
                try:
                    read_image(path)
                except UndecodableImage:
                    bad.append(path)
                    continue
            samples.append((path, cid))
    if empty:
        raise EmptyClass(f"class folders without images: {', '.join(empty)}")
    if bad:
        raise UndecodableImage(bad)
    split = stratified_split([c for _, c in samples], val_fraction, seed)
    return DatasetIndex(classes, samples, split, seed, val_fraction, root_dir)


def batches(index: DatasetIndex, split: str, batch_size: int = 32, shuffle: bool = False,
            seed: int = 0, spec: AugmentSpec | None = None, epoch: int = 0,
            augment: bool = False, workers: int = 0):
    """Yield ``(images [B,3,H,W], labels [B])``; the last batch may be short.

    Shuffling is a pure function of (seed, epoch). Each sample's augmentation
    RNG is derived from (seed, epoch, sample position), so worker threads do not
    change the output.
    """
    spec = spec or AugmentSpec()
    items = index.subset(split)
    if not items:
        raise EmptySplit(f"split {split!r} is empty")
    order = np.arange(len(items))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(items))
    mode = "train" if augment else "eval"

    def load(pos):
        path, _ = items[order[pos]]
        rng = np.random.default_rng([seed, epoch, pos, 1]) if augment else None
        return transform_array(read_image(path), spec, mode, rng)

    pool = ThreadPoolExecutor(workers) if workers > 0 else None
    try:
        for start in range(0, len(items), batch_size):
            positions = range(start, min(start + batch_size, len(items)))
            arrays = list(pool.map(load, positions)) if pool else [load(p) for p in positions]
            labels = np.array([items[order[p]][1] for p in positions], dtype=np.int64)
            yield Tensor(np.stack(arrays)), labels
    finally:
        if pool:
            pool.shutdown()
