"""``secnn`` command line: gen-synth, train, eval, inspect, gradcheck.

Exit codes: 0 success, 1 configuration error or failed expectation/check,
2 data error (missing/undecodable data, unreadable checkpoint), 3 training
divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from . import __version__
from .data import (EmptyClass, EmptySplit, IoFailure, NoClasses, UndecodableImage, build_index,
                   gen_synthetic)
from .gradcheck import DEFAULT_TOLERANCE, SCOPES, run_scope
from .kernels import BACKEND
from .nn import InvalidConfig, UnsupportedModel, build_model, format_summary, freeze_for_transfer
from .nn import param_count, size_mb
from .train import (Checkpoint, ClassMismatch, CorruptCheckpoint, DivergedLoss, TrainConfig,
                    evaluate, export_curves, fit)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
OUTPUT_ENV = "SECNN_OUTPUT_DIR"
DATA_ERRORS = (NoClasses, EmptyClass, EmptySplit, UndecodableImage, FileNotFoundError)


class ConfigError(ValueError):
    pass


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _output_dir(flag: str | None, default: str) -> str:
    return flag or os.environ.get(OUTPUT_ENV) or default


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# flag name -> TrainConfig field; None defaults let config-file values show through
_TRAIN_FLAGS = {
    "model": dict(choices=("custom", "resnet50", "vgg16")),
    "epochs": dict(type=int),
    "batch_size": dict(type=int),
    "lr": dict(type=float),
    "head_dropout": dict(type=float),
    "block_dropout": dict(type=float),
    "weight_decay": dict(type=float),
    "beta1": dict(type=float),
    "beta2": dict(type=float),
    "eps": dict(type=float),
    "base_channels": dict(type=int),
    "seed": dict(type=int),
    "resolution": dict(type=int),
    "val_fraction": dict(type=float),
    "workers": dict(type=int),
}


def _add_train_flags(p: argparse.ArgumentParser):
    for name, kw in _TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)
    p.add_argument("--transfer", "--tl", dest="transfer", action="store_const", const=True,
                   default=None, help="freeze all but the final layer (resnet50/vgg16)")
    p.add_argument("--deterministic", dest="deterministic", action="store_true", default=None)
    p.add_argument("--no-deterministic", dest="deterministic", action="store_false")
    p.add_argument("--no-augment", dest="no_augment", action="store_true",
                   help="disable all random train-time transforms")


def resolve_config(args) -> TrainConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    merged: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a flat JSON object")
        merged.update({k.replace("-", "_"): v for k, v in raw.items()})
    known = {f.name for f in fields(TrainConfig)}
    for name in known:
        val = getattr(args, name, None)
        if val is not None:
            merged[name] = val
    if args.no_augment:
        aug = dict(merged.get("augment") or {})
        aug.update(hflip_prob=0.0, rotation_degrees=0.0, brightness=(1.0, 1.0),
                   contrast=(1.0, 1.0), saturation=(1.0, 1.0))
        merged["augment"] = aug
    try:
        return TrainConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_gen_synth(args) -> int:
    out = _output_dir(args.out, "synthetic")
    try:
        paths = gen_synthetic(out, args.classes, args.per_class, args.size, args.seed)
    except IoFailure as exc:
        return _fail(EXIT_DATA, str(exc))
    except ValueError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    print(f"wrote {len(paths)} images in {args.classes} classes to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        config = resolve_config(args)
        if config.transfer and config.model == "custom":
            raise ConfigError("--transfer applies to resnet50/vgg16 only")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        index = build_index(args.data, config.val_fraction, config.seed)
        if not index.indices("train") or not index.indices("val"):
            raise EmptySplit("train and validation splits must both be non-empty")
    except DATA_ERRORS as exc:
        return _fail(EXIT_DATA, str(exc))

    out = _output_dir(args.out, "runs")
    os.makedirs(out, exist_ok=True)

    def progress(rec):
        print(f"epoch {rec.epoch:3d}  train_loss {rec.train_loss:.4f}  train_acc "
              f"{rec.train_acc:.4f}  val_loss {rec.val_loss:.4f}  val_acc {rec.val_acc:.4f}  "
              f"{rec.seconds:.1f}s", flush=True)

    try:
        result = fit(config, index, on_epoch=None if args.quiet else progress)
    except DivergedLoss as exc:
        if exc.checkpoint is not None:
            exc.checkpoint.save(os.path.join(out, "checkpoint.ckpt"))
            return _fail(EXIT_DIVERGED, f"{exc}; last good checkpoint written to {out}")
        return _fail(EXIT_DIVERGED, f"{exc}; no completed epoch to save")
    except (InvalidConfig, UnsupportedModel) as exc:
        return _fail(EXIT_CONFIG, str(exc))

    ckpt = result.checkpoint
    ckpt.save(os.path.join(out, "checkpoint.ckpt"))
    export_curves(result.records, os.path.join(out, "curves.csv"),
                  include_time=not config.deterministic)
    _write_json(os.path.join(out, "manifest.json"), {
        "config": config.to_dict(),
        "optimizer": ckpt.manifest["optimizer"],
        "classes": index.classes,
        "split_counts": {s: len(index.indices(s)) for s in ("train", "val")},
        "best_epoch": ckpt.epoch,
        "best_val_accuracy": ckpt.val_accuracy,
        "backend": BACKEND,
        "version": __version__,
    })
    _write_json(os.path.join(out, "timing.json"), {
        "total_seconds": result.total_seconds,
        "epoch_seconds": [r.seconds for r in result.records],
    })
    report = evaluate(ckpt, index, "val", train_seconds=result.total_seconds)
    _write_report(report, index.classes, out)
    print(f"best epoch {ckpt.epoch}: val_acc {ckpt.val_accuracy:.4f}; outputs in {out}")
    return EXIT_OK


def _write_report(report, classes, out):
    _write_json(os.path.join(out, "report.json"), report.to_dict())
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(report.format_text(classes) + "\n")
    if report.roc is not None:
        report.roc.to_csv(os.path.join(out, "roc.csv"))
    if report.pr is not None:
        report.pr.to_csv(os.path.join(out, "pr.csv"))


def cmd_eval(args) -> int:
    try:
        ckpt = Checkpoint.load(args.checkpoint)
        cfg = TrainConfig.from_dict(ckpt.manifest["config"])
        index = build_index(args.data, cfg.val_fraction, cfg.seed)
        report = evaluate(ckpt, index, args.split)
    except (OSError, CorruptCheckpoint, ClassMismatch) + DATA_ERRORS as exc:
        return _fail(EXIT_DATA, str(exc))
    out = _output_dir(args.out, os.path.dirname(os.path.abspath(args.checkpoint)))
    os.makedirs(out, exist_ok=True)
    _write_report(report, index.classes, out)
    print(report.format_text(index.classes))
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        model = build_model(args.model, args.classes, args.base_channels)
        if args.tl:
            freeze_for_transfer(model)
    except (InvalidConfig, UnsupportedModel) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    res = args.resolution
    print(format_summary(model, (1, 3, res, res)))
    total, trainable = param_count(model)
    code = EXIT_OK
    for label, want, got in (("total", args.expect_total, total),
                             ("trainable", args.expect_trainable, trainable)):
        if want is not None and want != got:
            print(f"MISMATCH {label} params: expected {want}, got {got}")
            code = EXIT_CONFIG
    if args.expect_size is not None and round(args.expect_size, 2) != size_mb(model):
        print(f"MISMATCH size MB: expected {args.expect_size:.2f}, got {size_mb(model):.2f}")
        code = EXIT_CONFIG
    return code


def cmd_gradcheck(args) -> int:
    scopes = SCOPES if args.scope == "all" else (args.scope,)
    ok = True
    for scope in scopes:
        for unit in run_scope(scope, args.seed, args.tol):
            status = "pass" if unit.passed else "FAIL"
            print(f"{scope:<7} {unit.name:<36} max_rel_err {unit.max_rel_err:.3e}  "
                  f"coords {unit.checked:5d}  {status}")
            ok &= unit.passed
    print("all units passed" if ok else "gradient check FAILED")
    return EXIT_OK if ok else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a synthetic folder-per-class dataset")
    p.add_argument("--out", help=f"dataset root (default ${OUTPUT_ENV} or ./synthetic)")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train and keep the best-validation checkpoint")
    p.add_argument("--data", required=True, help="folder-per-class image root")
    p.add_argument("--out", help=f"run directory (default ${OUTPUT_ENV} or ./runs)")
    p.add_argument("--config", help="flat JSON file with TrainConfig keys; flags win")
    p.add_argument("--quiet", action="store_true", help="no per-epoch lines")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--out", help="report directory (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print a layer summary and parameter counts")
    p.add_argument("--model", choices=("custom", "resnet50", "vgg16"), default="custom")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--tl", "--transfer", dest="tl", action="store_true")
    p.add_argument("--resolution", type=int, default=224)
    p.add_argument("--expect-total", type=int)
    p.add_argument("--expect-trainable", type=int)
    p.add_argument("--expect-size", type=float)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gradcheck", help="float64 finite-difference gradient checks")
    p.add_argument("scope", choices=SCOPES + ("all",))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
