"""Adam with selective (coupled L2) weight decay, and softmax cross-entropy."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autograd import Parameter
from .tensor import Tensor


class LabelOutOfRange(ValueError):
    pass


class MissingGrad(RuntimeError):
    pass


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows and its gradient ``(softmax - onehot) / N``.

    Uses the max-shifted log-sum-exp, so logits of any finite magnitude are safe.
    """
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = z.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    shifted = z - z.max(axis=1, keepdims=True)
    sumexp = np.exp(shifted).sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(sumexp)
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    grad /= n
    return float(loss), grad.astype(z.dtype)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    t: int = 0
    m: dict = field(default_factory=dict, repr=False)
    v: dict = field(default_factory=dict, repr=False)

    def hyperparameters(self) -> dict:
        d = asdict(self)
        for key in ("m", "v", "t"):
            d.pop(key)
        return d


def adam_step(state: AdamState, params: list[Parameter]):
    """One Adam update over ``params``; frozen parameters are skipped.

    Weight decay is added to the gradient only for decay-eligible tensors.
    Moments are keyed by parameter name.
    """
    live = [p for p in params if p.trainable]
    missing = [p.name for p in live if not p.touched]
    if missing:
        raise MissingGrad(f"no gradient reached: {', '.join(missing[:5])}"
                          + (" ..." if len(missing) > 5 else ""))
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p in live:
        g = p.grad
        if p.decay_eligible and state.weight_decay:
            g = g + state.weight_decay * p.data
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)


def zero_grad(params):
    for p in params:
        p.zero_grad()
