"""Define-by-run reverse-mode differentiation.

Differentiable functions (see :mod:`secnn.functional`) append a node to the
innermost active :class:`Tape` whenever one of their inputs is tracked. A
tensor is tracked when it is a trainable :class:`Parameter`, was explicitly
watched, or is the output of a recorded node. Untracked sub-graphs, such as a
frozen backbone, are never recorded and cost nothing in backward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


class DetachedLoss(RuntimeError):
    pass


class NondeterministicFunction(RuntimeError):
    pass


class Parameter(Tensor):
    """A trainable tensor with a gradient slot.

    ``decay_eligible`` marks conv / linear weights, the only tensors the
    optimizer regularizes.
    """

    __slots__ = ("grad", "name", "trainable", "decay_eligible", "touched")

    def __init__(self, data, name: str = "", trainable: bool = True,
                 decay_eligible: bool = False, dtype=None):
        super().__init__(data, dtype=dtype)
        self.grad = np.zeros_like(self.data)
        self.name = name
        self.trainable = trainable
        self.decay_eligible = decay_eligible
        self.touched = False

    @property
    def value(self) -> "Parameter":
        return self

    def zero_grad(self):
        self.grad[...] = 0
        self.touched = False

    def set_data(self, arr: np.ndarray):
        """Replace storage (dtype changes, checkpoint loads)."""
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")
        self.grad = np.zeros_like(self.data)
        self.touched = False

    def __repr__(self):
        flags = "trainable" if self.trainable else "frozen"
        return f"Parameter({self.name!r}, shape={self.shape}, {flags})"


@dataclass
class Node:
    output: Tensor
    inputs: tuple
    backward: Callable  # (grad_out, needs) -> sequence of ndarray | None


_tapes: list["Tape"] = []


def current_tape() -> "Tape | None":
    return _tapes[-1] if _tapes else None


class Tape:
    """Ordered record of primitive applications under a ``with`` block."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._tracked: dict[int, Tensor] = {}
        self._watched: dict[int, Tensor] = {}
        self.grads: dict[int, np.ndarray] = {}

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def watch(self, t: Tensor) -> Tensor:
        self._tracked[id(t)] = t
        self._watched[id(t)] = t
        return t

    def is_tracked(self, t) -> bool:
        if not isinstance(t, Tensor):
            return False
        if isinstance(t, Parameter) and t.trainable:
            self._tracked[id(t)] = t
            return True
        return id(t) in self._tracked

    def record(self, output: Tensor, inputs: Sequence, backward: Callable):
        self.nodes.append(Node(output, tuple(inputs), backward))
        self._tracked[id(output)] = output

    def grad(self, t: Tensor) -> np.ndarray | None:
        """Gradient of the last backward w.r.t. a watched tensor."""
        return self.grads.get(id(t))

    def backward(self, loss: Tensor):
        backward(self, loss)


def record(output: Tensor, inputs: Sequence, backward_fn: Callable) -> Tensor:
    """Attach ``output`` to the active tape if any input is tracked."""
    tape = current_tape()
    if tape is not None and any(tape.is_tracked(t) for t in inputs):
        tape.record(output, inputs, backward_fn)
    return output


def backward(tape: Tape, loss: Tensor):
    """Accumulate dLoss/dParam into every reachable trainable Parameter.

    The tape is freed afterwards; gradients for explicitly watched tensors stay
    available through :meth:`Tape.grad`.
    """
    if loss.ndim != 0:
        raise DetachedLoss(f"loss must be a scalar, got shape {loss.shape}")
    if not any(n.output is loss for n in reversed(tape.nodes)):
        raise DetachedLoss("loss was not recorded on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        needs = tuple(tape.is_tracked(t) for t in node.inputs)
        in_grads = node.backward(g, needs)
        for t, need, gi in zip(node.inputs, needs, in_grads):
            if not need or gi is None:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    tape.grads = {}
    for key, t in tape._tracked.items():
        g = grads.get(key)
        if g is None:
            continue
        if isinstance(t, Parameter) and t.trainable:
            t.grad += g
            t.touched = True
        if key in tape._watched:
            tape.grads[key] = g
    tape.nodes = []


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    checked: int


def _numeric_grad(loss_fn, target: Tensor, idx, base: float):
    h = 1e-5 * (1.0 + abs(base))
    flat = target.data.reshape(-1)
    flat[idx] = base + h
    f_plus = loss_fn().item()
    flat[idx] = base - h
    f_minus = loss_fn().item()
    flat[idx] = base
    return (f_plus - f_minus) / (2 * h)


def check_gradients(loss_fn: Callable[[], Tensor], targets: Sequence[Tensor],
                    tolerance: float = 1e-4, max_coords: int | None = None,
                    seed: int = 0) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    ``loss_fn`` closes over ``targets``, whose buffers are perturbed in place.
    With ``max_coords`` set, at most that many coordinates per target are
    sampled (seeded) instead of checking every one.
    """
    first = loss_fn().item()
    if loss_fn().item() != first:
        raise NondeterministicFunction("two evaluations at the same point differ")

    for t in targets:
        if isinstance(t, Parameter):
            t.zero_grad()
    with Tape() as tape:
        for t in targets:
            if not isinstance(t, Parameter):
                tape.watch(t)
        loss = loss_fn()
    backward(tape, loss)

    rng = np.random.default_rng(seed)
    worst, count = 0.0, 0
    for t in targets:
        if isinstance(t, Parameter):
            analytic = t.grad.reshape(-1).copy()
        else:
            g = tape.grad(t)
            analytic = np.zeros(t.size) if g is None else g.reshape(-1)
        n = t.size
        if max_coords is not None and n > max_coords:
            coords = np.sort(rng.choice(n, size=max_coords, replace=False))
        else:
            coords = range(n)
        flat = t.data.reshape(-1)
        for idx in coords:
            numeric = _numeric_grad(loss_fn, t, idx, float(flat[idx]))
            err = abs(analytic[idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, float(err))
            count += 1
    return GradCheckReport(worst, worst <= tolerance, count)


def grad_check(fn: Callable[[Tensor], Tensor], point, tolerance: float = 1e-4,
               max_coords: int | None = None) -> GradCheckReport:
    """Finite-difference check of a scalar function of one tensor."""
    x = Tensor(np.array(point.data if isinstance(point, Tensor) else point, copy=True))
    return check_gradients(lambda: fn(x), [x], tolerance, max_coords)
