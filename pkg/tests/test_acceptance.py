"""Acceptance criteria 1-10.

Each test records a PASS/FAIL line that the terminal summary prints (see
conftest.py). Running this file directly prints the same lines:

    python3 tests/test_acceptance.py
"""

import time
import warnings

import numpy as np
import pytest

from secnn import functional as F
from secnn.autograd import Tape, backward
from secnn.cli import main as cli_main
from secnn.data import batches, build_index, gen_synthetic, stratified_split
from secnn.gradcheck import run_scope
from secnn.metrics import UndefinedMetricWarning, classification_report, pr_curve_ap, roc_curve_auc
from secnn.nn import build_model, freeze_for_transfer, param_count, size_mb
from secnn.optim import AdamState, cross_entropy
from secnn.tensor import Tensor
from secnn.train import TrainConfig, fit, make_model, train_step

RESULTS: dict[int, tuple[bool, str]] = {}


def report(n: int, ok: bool, detail: str):
    RESULTS[n] = (ok, detail)
    print(f"ACCEPTANCE {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# classes -> (custom total, resnet50 total, resnet50 TL trainable, vgg16 total, vgg16 TL trainable)
TABLE_COUNTS = {
    2: (641304, 23512130, 4098, 134268738, 8194),
    15: (642981, 23538767, 30735, 134321999, 61455),
    35: (645561, 23579747, 71715, 134403939, 143395),
}


def test_01_parameter_counts():
    bad, slowest = [], 0.0
    for k, (custom, r_tot, r_tl, v_tot, v_tl) in TABLE_COUNTS.items():
        for kind, want_total, want_tl in (("custom", custom, None), ("resnet50", r_tot, r_tl),
                                          ("vgg16", v_tot, v_tl)):
            t0 = time.perf_counter()
            model = build_model(kind, k)
            total, _ = param_count(model)
            if total != want_total:
                bad.append(f"{kind} K={k} total {total} != {want_total}")
            if want_tl is not None:
                _, trainable = param_count(freeze_for_transfer(model))
                if trainable != want_tl:
                    bad.append(f"{kind} K={k} TL trainable {trainable} != {want_tl}")
            slowest = max(slowest, time.perf_counter() - t0)
    if slowest >= 1.0:
        bad.append(f"slowest count took {slowest:.2f}s")
    report(1, not bad, "; ".join(bad) or f"21 counts exact, slowest {slowest:.2f}s")


def test_02_model_sizes():
    got = tuple(size_mb(build_model(kind, 2)) for kind in ("custom", "resnet50", "vgg16"))
    report(2, got == (2.45, 89.69, 512.19), f"sizes MB {got}")


def test_03_gradient_suite():
    t0 = time.perf_counter()
    units = [u for scope in ("layers", "blocks", "model") for u in run_scope(scope)]
    secs = time.perf_counter() - t0
    failed = [f"{u.name}={u.max_rel_err:.2e}" for u in units if not u.passed]
    worst = max(u.max_rel_err for u in units)
    names = " ".join(u.name for u in units)
    covered = all(s in names for s in ("conv2d", "batchnorm2d", "linear", "se block",
                                       "identity skip", "projection skip", "custom_cnn C=8"))
    ok = not failed and covered and worst <= 1e-4 and secs < 120
    report(3, ok, f"{len(units)} units, worst rel err {worst:.2e}, {secs:.1f}s"
           + (f"; failed {failed}" if failed else ""))


@pytest.mark.slow
def test_04_synthetic_accuracy(tmp_path):
    gen_synthetic(tmp_path, num_classes=2, per_class=200, image_size=64, seed=0)
    index = build_index(tmp_path, 0.2, 0)
    cfg = TrainConfig(model="custom", base_channels=16, epochs=20, lr=1e-3, head_dropout=0.5,
                      resolution=64, batch_size=32, seed=0)
    t0 = time.perf_counter()
    result = fit(cfg, index)
    secs = time.perf_counter() - t0
    acc = result.checkpoint.val_accuracy
    report(4, acc >= 0.90 and secs < 900,
           f"best val acc {acc:.4f} (epoch {result.checkpoint.epoch}), {secs:.0f}s")


@pytest.mark.slow
def test_05_overfit_32_images(tmp_path):
    # 20 per class -> exactly 32 training images after the 80/20 split
    gen_synthetic(tmp_path, num_classes=2, per_class=20, image_size=64, seed=1)
    index = build_index(tmp_path, 0.2, 0)
    assert len(index.indices("train")) == 32
    cfg = TrainConfig(base_channels=16, epochs=60, lr=1e-3, resolution=64, batch_size=32, seed=0)
    t0 = time.perf_counter()
    result = fit(cfg, index)
    secs = time.perf_counter() - t0
    first = next((r.epoch for r in result.records if r.train_acc == 1.0), None)
    report(5, first is not None and secs < 300,
           f"train acc 1.0 first at epoch {first}, {secs:.0f}s")


def _auc_pairs(s, y):
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    return ((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (len(pos) * len(neg))


def _ap_enumerate(s, y):
    ap, prev = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        sel = s >= t
        tp = int((sel & (y == 1)).sum())
        r = tp / int(y.sum())
        ap += (r - prev) * tp / int(sel.sum())
        prev = r
    return ap


def _weighted_direct(t, p, k):
    n = len(t)
    out = np.zeros(3)
    for c in range(k):
        tp = int(((t == c) & (p == c)).sum())
        pred, sup = int((p == c).sum()), int((t == c).sum())
        prec = tp / pred if pred else 0.0
        rec = tp / sup if sup else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        out += sup * np.array([prec, rec, f1])
    return out / n


def test_06_metric_oracles():
    rng = np.random.default_rng(2024)
    worst_curve = worst_w = 0.0
    recall_eq = True
    for i in range(1000):
        n = int(rng.integers(2, 13))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[rng.integers(n)] ^= 1
        s = rng.integers(0, 5, n) / 4.0 if i % 2 else rng.random(n)
        worst_curve = max(worst_curve, abs(roc_curve_auc(s, y)[1] - _auc_pairs(s, y)),
                          abs(pr_curve_ap(s, y)[1] - _ap_enumerate(s, y)))
        k = int(rng.integers(2, 5))
        t, p = rng.integers(0, k, n), rng.integers(0, k, n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UndefinedMetricWarning)
            rep = classification_report(t, p, k)
        got = np.array([rep.weighted_precision, rep.weighted_recall, rep.weighted_f1])
        worst_w = max(worst_w, float(np.abs(got - _weighted_direct(t, p, k)).max()))
        recall_eq &= rep.weighted_recall == rep.accuracy
    ok = worst_curve <= 1e-9 and worst_w <= 1e-12 and recall_eq
    report(6, ok, f"AUC/AP max err {worst_curve:.1e}, weighted P/R/F1 max err {worst_w:.1e}, "
                  f"weighted recall == accuracy: {recall_eq}")


def test_07_cli_determinism(tmp_path):
    data = tmp_path / "data"
    gen_synthetic(data, 2, 12, 32, seed=3)
    args = ["--data", str(data), "--base-channels", "16", "--resolution", "32", "--epochs", "2",
            "--batch-size", "8", "--lr", "1e-3", "--seed", "5", "--deterministic", "--quiet"]
    for run in ("a", "b"):
        assert cli_main(["train", "--out", str(tmp_path / run)] + args) == 0
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("curves.csv", "checkpoint.ckpt")}
    report(7, all(same.values()), f"byte-identical {same}")


def test_08_stratified_split():
    rng = np.random.default_rng(8)
    worst = 0.0
    for trial in range(500):
        sizes = rng.integers(1, 60, int(rng.integers(2, 8)))
        labels = np.repeat(np.arange(len(sizes)), sizes)
        rng.shuffle(labels)
        split = np.array(stratified_split(labels, 0.2, seed=trial))
        for c, n in enumerate(sizes):
            val = int(((labels == c) & (split == "val")).sum())
            worst = max(worst, abs(val - 0.2 * n), abs((n - val) - 0.8 * n))
    report(8, worst <= 1, f"max per-class deviation {worst:.2f} samples over 500 vectors")


def test_09_transfer_freeze(tmp_path):
    gen_synthetic(tmp_path, 2, 12, 32, seed=9)  # 20 train images: five batches of 4
    index = build_index(tmp_path)
    cfg = TrainConfig(model="resnet50", transfer=True, resolution=32, batch_size=4, seed=0)
    model = make_model(cfg, 2)
    before = {name: p.data.copy() for name, p in model.named_parameters()}
    state = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    stream = batches(index, "train", cfg.batch_size, shuffle=True, spec=cfg.augment, augment=True)
    for _ in range(5):
        images, labels = next(stream)
        train_step(model, state, images, labels)
    changed = frozen_moved = 0
    for name, p in model.named_parameters():
        diff = int((p.data != before[name]).sum())
        changed += diff
        if not p.trainable and diff:
            frozen_moved += 1
    report(9, frozen_moved == 0 and changed == 4098,
           f"{changed} scalars changed, {frozen_moved} frozen tensors moved")


def test_10_softmax_ce_stability():
    rng = np.random.default_rng(10)
    worst_row, finite = 0.0, True
    for dtype in (np.float32, np.float64):
        for _ in range(200):
            z = (rng.uniform(-1e4, 1e4, (int(rng.integers(1, 9)), int(rng.integers(2, 40))))
                 .astype(dtype))
            y = rng.integers(0, z.shape[1], z.shape[0])
            loss, g = cross_entropy(z, y)
            finite &= bool(np.isfinite(loss) and np.isfinite(g).all())
            worst_row = max(worst_row, float(np.abs(g.astype(np.float64).sum(axis=1)).max()))
            zt = Tensor(z)
            with Tape() as tape:
                tape.watch(zt)
                lt = F.cross_entropy_loss(zt, y)
            backward(tape, lt)
            finite &= bool(np.isfinite(lt.item()) and np.isfinite(tape.grad(zt)).all())
    report(10, finite and worst_row <= 1e-6,
           f"finite: {finite}, max |row sum| {worst_row:.1e}")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    tests = sorted((name, fn) for name, fn in globals().items() if name.startswith("test_"))
    failures = 0
    for name, fn in tests:
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
