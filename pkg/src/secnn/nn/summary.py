"""Plain-text architecture summary (the ``inspect`` CLI output)."""

from __future__ import annotations

from .models import ModelGraph, param_count, size_mb


def summary_rows(model: ModelGraph, input_shape=(1, 3, 224, 224)):
    """One row per layer: (name, kind, output shape, params, trainable flag)."""
    rows, _ = model.root.summarize(tuple(input_shape), "")
    out = []
    for name, kind, shape, params in rows:
        n = sum(p.size for p in params)
        trainable = any(p.trainable for p in params) if params else None
        out.append((name, kind, tuple(shape), n, trainable))
    return out


def format_summary(model: ModelGraph, input_shape=(1, 3, 224, 224)) -> str:
    rows = summary_rows(model, input_shape)
    header = ("layer", "type", "output shape", "params", "trainable")
    cells = [header] + [
        (name, kind, "x".join(str(d) for d in shape), f"{n:,}",
         "-" if flag is None else ("yes" if flag else "no"))
        for name, kind, shape, n, flag in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for i, r in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if j < 3 else c.rjust(w)
                               for j, (c, w) in enumerate(zip(r, widths))).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    total, trainable = param_count(model)
    lines.append("")
    lines.append(f"model: {model.kind}  classes: {model.num_classes}")
    lines.append(f"total params: {total:,}")
    lines.append(f"trainable params: {trainable:,}")
    lines.append(f"size (MB): {size_mb(model):.2f}")
    return "\n".join(lines)
