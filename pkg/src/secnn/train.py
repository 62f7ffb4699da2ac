"""Training loop with best-validation checkpointing, evaluation and curve export."""

from __future__ import annotations

import csv
import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from . import functional as F
from .autograd import Tape, backward
from .data import AugmentSpec, DatasetIndex, IoFailure, batches
from .metrics import ClassificationReport, classification_report, pr_curve_ap, predict, roc_curve_auc
from .nn import (ModelGraph, build_model, freeze_for_transfer, kaiming_init, param_count,
                 size_mb)
from .optim import AdamState, adam_step, cross_entropy, zero_grad
from .tensor import tensor_from_bytes, tensor_to_bytes

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"SECNNCK\x00"
CURVE_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"]

# the three learning-rate / head-dropout combinations that were compared
SEARCH_GRID = ((1e-4, 0.5), (1e-4, 0.0), (1e-3, 0.5))


class DivergedLoss(RuntimeError):
    def __init__(self, msg, checkpoint=None):
        super().__init__(msg)
        self.checkpoint = checkpoint


class CorruptCheckpoint(ValueError):
    pass


class ClassMismatch(ValueError):
    pass


@dataclass
class TrainConfig:
    model: str = "custom"
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-4
    head_dropout: float = 0.5
    block_dropout: float = 0.1
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_channels: int = 32
    transfer: bool = False
    seed: int = 0
    resolution: int = 224
    val_fraction: float = 0.2
    deterministic: bool = True
    workers: int = 0
    augment: AugmentSpec = field(default_factory=AugmentSpec)

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentSpec.from_dict(self.augment)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.augment.resize = (self.resolution, self.resolution)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "augment"}
        d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float


@dataclass
class Checkpoint:
    manifest: dict
    state: dict

    @property
    def val_accuracy(self) -> float:
        return self.manifest["val_accuracy"]

    @property
    def epoch(self) -> int:
        return self.manifest["epoch"]

    @property
    def classes(self) -> list[str]:
        return self.manifest["classes"]

    def to_bytes(self) -> bytes:
        names = list(self.state)
        manifest = dict(self.manifest, format_version=FORMAT_VERSION, tensors=names)
        mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
        parts = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(mbytes)), mbytes]
        parts += [tensor_to_bytes(self.state[n]) for n in names]
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        head = len(MAGIC) + 12
        if len(buf) < head + 4 or buf[:len(MAGIC)] != MAGIC:
            raise CorruptCheckpoint("not a checkpoint file or header truncated")
        if zlib.crc32(buf[:-4]) != struct.unpack("<I", buf[-4:])[0]:
            raise CorruptCheckpoint("checksum mismatch (truncated or modified file)")
        version, mlen = struct.unpack_from("<IQ", buf, len(MAGIC))
        if version != FORMAT_VERSION:
            raise CorruptCheckpoint(f"unsupported format version {version}")
        try:
            manifest = json.loads(buf[head:head + mlen].decode("utf-8"))
            offset = head + mlen
            state = {}
            for name in manifest["tensors"]:
                t, offset = tensor_from_bytes(buf, offset)
                state[name] = t.data
        except (ValueError, KeyError) as exc:
            raise CorruptCheckpoint(f"manifest/blob inconsistency: {exc}") from exc
        if offset != len(buf) - 4:
            raise CorruptCheckpoint("trailing bytes after the last tensor")
        return cls(manifest, state)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def build_model(self) -> ModelGraph:
        cfg = TrainConfig.from_dict(self.manifest["config"])
        model = make_model(cfg, len(self.classes))
        try:
            model.load_state(self.state)
        except (KeyError, ValueError) as exc:
            raise CorruptCheckpoint(str(exc)) from exc
        return model


class FitResult(NamedTuple):
    checkpoint: Checkpoint
    records: list
    total_seconds: float


def make_model(config: TrainConfig, num_classes: int) -> ModelGraph:
    model = build_model(config.model, num_classes, config.base_channels, config.head_dropout,
                        config.block_dropout, seed=config.seed)
    kaiming_init(model, config.seed)
    if config.transfer:
        freeze_for_transfer(model, config.head_dropout)
    return model


def train_step(model: ModelGraph, state: AdamState, images, labels) -> tuple[float, int]:
    """One optimizer step; returns (mean batch loss, correct predictions)."""
    params = model.parameters
    zero_grad(params)
    with Tape() as tape:
        logits = model.forward(images, "train")
        loss = F.cross_entropy_loss(logits, labels)
    value = loss.item()
    if not np.isfinite(value):
        raise DivergedLoss(f"non-finite training loss {value}")
    backward(tape, loss)
    adam_step(state, params)
    return value, int((logits.data.argmax(axis=1) == labels).sum())


def _eval_pass(model, index, config, split="val"):
    total_loss, correct, n = 0.0, 0, 0
    for images, labels in batches(index, split, config.batch_size, shuffle=False,
                                  spec=config.augment, workers=config.workers):
        logits = model.forward(images, "eval")
        loss, _ = cross_entropy(logits, labels)
        total_loss += loss * len(labels)
        correct += int((logits.data.argmax(axis=1) == labels).sum())
        n += len(labels)
    return total_loss / n, correct / n


def _snapshot(model: ModelGraph) -> dict:
    return {name: np.array(arr, copy=True) for name, arr in model.state().items()}


def fit(config: TrainConfig, index: DatasetIndex, on_epoch=None) -> FitResult:
    """Train, validating after every epoch; keep the weights of the first epoch
    that reaches the highest validation accuracy."""
    start = time.perf_counter()
    model = make_model(config, index.num_classes)
    state = AdamState(config.lr, config.beta1, config.beta2, config.eps, config.weight_decay)
    workers = 0 if config.deterministic else config.workers
    best = None
    records: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        tot_loss, correct, seen = 0.0, 0, 0
        try:
            for images, labels in batches(index, "train", config.batch_size, shuffle=True,
                                          seed=config.seed, spec=config.augment, epoch=epoch,
                                          augment=True, workers=workers):
                loss, ok = train_step(model, state, images, labels)
                tot_loss += loss * len(labels)
                correct += ok
                seen += len(labels)
        except DivergedLoss as exc:
            exc.checkpoint = best
            raise
        val_loss, val_acc = _eval_pass(model, index, config)
        rec = EpochRecord(epoch, tot_loss / seen, correct / seen, val_loss, val_acc,
                          time.perf_counter() - t0)
        records.append(rec)
        log.info("epoch %d: train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f (%.1fs)",
                 epoch, rec.train_loss, rec.train_acc, val_loss, val_acc, rec.seconds)
        if best is None or val_acc > best.val_accuracy:
            best = Checkpoint(_manifest(config, index, epoch, rec, state), _snapshot(model))
        if on_epoch is not None:
            on_epoch(rec)
    return FitResult(best, records, time.perf_counter() - start)


def _manifest(config, index, epoch, rec, state):
    return {
        "config": config.to_dict(),
        "optimizer": state.hyperparameters(),
        "epoch": epoch,
        "val_accuracy": rec.val_acc,
        "classes": list(index.classes),
        "metrics": {"train_loss": rec.train_loss, "train_acc": rec.train_acc,
                    "val_loss": rec.val_loss, "val_acc": rec.val_acc},
    }


def select_best_epoch(val_accs) -> int:
    """1-based epoch of the first strict maximum."""
    best_i, best_v = 0, None
    for i, v in enumerate(val_accs):
        if best_v is None or v > best_v:
            best_i, best_v = i, v
    return best_i + 1


def evaluate(checkpoint: Checkpoint, index: DatasetIndex, split: str = "val",
             train_seconds: float | None = None) -> ClassificationReport:
    """Eval-mode report for ``split``, with parameter / size / time accounting."""
    if list(checkpoint.classes) != list(index.classes):
        raise ClassMismatch(f"checkpoint classes {checkpoint.classes} != dataset {index.classes}")
    cfg = TrainConfig.from_dict(checkpoint.manifest["config"])
    model = checkpoint.build_model()
    y, pred, prob = predict(model, batches(index, split, cfg.batch_size, spec=cfg.augment))
    report = classification_report(y, pred, index.num_classes)
    if index.num_classes == 2 and 0 < y.sum() < len(y):
        report.roc, _ = roc_curve_auc(prob[:, 1], y)
        report.pr, _ = pr_curve_ap(prob[:, 1], y)
    total, trainable = param_count(model)
    report.extra.update(total_params=total, trainable_params=trainable,
                        size_mb=size_mb(model), best_epoch=checkpoint.epoch)
    if train_seconds is not None:
        report.extra["train_seconds"] = round(train_seconds, 2)
    return report


def export_curves(records, path, include_time: bool = True):
    """CSV with one row per epoch, 6-decimal fixed formatting."""
    if not records:
        raise ValueError("no epoch records to export")
    lines = [",".join(CURVE_HEADER)]
    for r in sorted(records, key=lambda r: r.epoch):
        secs = r.seconds if include_time else 0.0
        lines.append(f"{r.epoch},{r.train_loss:.6f},{r.train_acc:.6f},{r.val_loss:.6f},"
                     f"{r.val_acc:.6f},{secs:.6f}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write curves to {path}: {exc}") from exc


def read_curves(path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochRecord(int(r["epoch"]), *(float(r[k]) for k in CURVE_HEADER[1:])) for r in rows]
