"""Reverse-mode differentiation over the fixed operation set of the model.

Eager forward with a taped backward: every op computes its value
immediately and records a closure that scatters the output adjoint into
its parents' grad buffers. Graphs are rebuilt per forward pass and are
never shared between threads.

Field-shaped values follow the batched layout (batch, channels, *spatial).
Complex parameters (spectral weights) are differentiated as independent
(re, im) real pairs; their grad arrays are complex with the convention
grad = dL/dRe + i * dL/dIm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as spectral_mod
from . import tensor_ops
from .tensor_ops import ShapeError

GELU_A = 0.7978845608028654  # sqrt(2/pi)
GELU_B = 0.044715


class Parameter:
    """Named trainable array; grads accumulate across backward calls."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        value = np.asarray(value)  # keeps 0-d scalars 0-d
        self.value = value if value.flags["C_CONTIGUOUS"] else np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Node:
    __slots__ = ("value", "parents", "backward_rule", "grad", "param")

    def __init__(self, value, parents=(), backward_rule=None, param=None):
        self.value = value
        self.parents = parents
        self.backward_rule = backward_rule  # f(grad_out) -> scatters into parents
        self.grad = None
        self.param = param


def constant(value: np.ndarray) -> Node:
    return Node(np.asarray(value))


def param_node(p: Parameter) -> Node:
    return Node(p.value, param=p)


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> None:
    """Populate grads of every parameter reachable from `loss`."""
    if loss.value.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.value.shape}")
    order = _toposort(loss)
    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.backward_rule is not None:
            node.backward_rule(node.grad)
    for node in order:
        if node.param is not None:
            node.param.grad += node.grad


# --- forward ops ------------------------------------------------------------


def add(a: Node, b: Node) -> Node:
    value = tensor_ops.add(a.value, b.value)

    def rule(g):
        a.grad += g
        b.grad += g

    return Node(value, (a, b), rule)


def hadamard(a: Node, b: Node) -> Node:
    value = tensor_ops.hadamard(a.value, b.value)

    def rule(g):
        a.grad += g * b.value
        b.grad += g * a.value

    return Node(value, (a, b), rule)


def scale_const(x: Node, k: float) -> Node:
    def rule(g):
        x.grad += k * g

    return Node(k * x.value, (x,), rule)


def scalar_scale(x: Node, s: Node) -> Node:
    """Multiply a field by a learnable scalar (shape-() parameter)."""
    if s.value.size != 1:
        raise ShapeError(f"scalar_scale expects a scalar, got shape {s.value.shape}")
    sval = s.value.reshape(())

    def rule(g):
        x.grad += sval * g
        s.grad += np.sum(g * x.value).reshape(s.value.shape)

    return Node(sval * x.value, (x, s), rule)


def channel_map(x: Node, w: Node, b: Node | None = None) -> Node:
    """Batched per-point channel mixing; x is (batch, c_in, *spatial)."""
    value = tensor_ops.channel_map(x.value, w.value, None if b is None else b.value, batched=True)
    c_in = x.value.shape[1]
    c_out = w.value.shape[0]
    spatial = x.value.shape[2:]

    def rule(g):
        gf = g.reshape(g.shape[0], c_out, -1)
        xf = x.value.reshape(g.shape[0], c_in, -1)
        x.grad += np.matmul(w.value.T, gf).reshape(x.value.shape)
        w.grad += np.matmul(gf, xf.transpose(0, 2, 1)).sum(axis=0)
        if b is not None:
            b.grad += gf.sum(axis=(0, 2))

    parents = (x, w) if b is None else (x, w, b)
    return Node(value, parents, rule)


def spectral_multiply(x: Node, w: Node, weights: spectral_mod.SpectralWeights) -> Node:
    """Truncated spectral convolution; `weights.w` must alias `w.value`."""
    value, spec_sel = spectral_mod.spectral_multiply_with_cache(
        x.value, weights, batched=True
    )
    spatial = x.value.shape[2:]

    def rule(g):
        grad_c, grad_w = spectral_mod.spectral_multiply_backward(
            g, spec_sel, weights, spatial
        )
        x.grad += grad_c.astype(x.value.dtype)
        w.grad += grad_w

    return Node(value, (x, w), rule)


def activation(x: Node, kind: str) -> Node:
    if kind == "tanh":
        t = np.tanh(x.value)

        def rule(g):
            x.grad += g * (1.0 - t * t)

        return Node(t, (x,), rule)
    if kind == "gelu":
        xv = x.value
        inner = GELU_A * (xv + GELU_B * xv**3)
        t = np.tanh(inner)
        value = 0.5 * xv * (1.0 + t)

        def rule(g):
            dinner = GELU_A * (1.0 + 3.0 * GELU_B * xv * xv)
            x.grad += g * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * dinner)

        return Node(value, (x,), rule)
    raise ValueError(f"unknown activation {kind!r}")


def concat(parts: list[Node]) -> Node:
    """Concatenate along the channel axis of batched fields."""
    value = tensor_ops.concat_channels([p.value for p in parts], batched=True)
    sizes = [p.value.shape[1] for p in parts]

    def rule(g):
        at = 0
        for p, size in zip(parts, sizes):
            p.grad += g[:, at : at + size]
            at += size

    return Node(value, tuple(parts), rule)


def slice_channels(x: Node, start: int, stop: int) -> Node:
    value = tensor_ops.slice_channels(x.value, start, stop, batched=True)

    def rule(g):
        x.grad[:, start:stop] += g

    return Node(value, (x,), rule)


def mean_all(x: Node) -> Node:
    def rule(g):
        x.grad += g / x.value.size

    return Node(np.asarray(np.mean(x.value)), (x,), rule)


def mse(pred: Node, target: np.ndarray) -> Node:
    """Mean squared error against a constant target."""
    if pred.value.shape != target.shape:
        raise ShapeError(f"mse: shapes differ: {pred.value.shape} vs {target.shape}")
    diff = pred.value - target

    def rule(g):
        pred.grad += g * (2.0 / diff.size) * diff

    return Node(np.asarray(np.mean(diff * diff)), (pred,), rule)


def relative_mse(pred: Node, target: np.ndarray) -> Node:
    """Per-sample sum(err^2)/sum(target^2), averaged over the batch axis."""
    if pred.value.shape != target.shape:
        raise ShapeError(
            f"relative_mse: shapes differ: {pred.value.shape} vs {target.shape}"
        )
    nb = pred.value.shape[0]
    diff = (pred.value - target).reshape(nb, -1)
    tnorm = np.sum(target.reshape(nb, -1) ** 2, axis=1)
    if np.any(tnorm == 0):
        raise ValueError("relative_mse: a sample in the target batch has zero norm")
    value = np.asarray(np.mean(np.sum(diff * diff, axis=1) / tnorm))

    def rule(g):
        scale = (2.0 / nb) / tnorm
        pred.grad += (g * scale[:, None] * diff).reshape(pred.value.shape)

    return Node(value, (pred,), rule)


# --- gradient checking ------------------------------------------------------


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if not e.passed]

    def format(self) -> str:
        lines = [f"{'parameter':<28} {'max rel err':>12}  status"]
        for e in self.entries:
            lines.append(
                f"{e.name:<28} {e.max_rel_err:>12.3e}  {'ok' if e.passed else 'FAIL'}"
            )
        lines.append(f"overall: {'ok' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def _real_view(arr: np.ndarray) -> np.ndarray:
    # complex arrays are differentiated per (re, im) component
    if np.iscomplexobj(arr):
        return arr.view(np.float64 if arr.dtype == np.complex128 else np.float32)
    return arr


def grad_check(
    params: list[Parameter],
    loss_fn,
    tolerance: float = 1e-4,
    h_base: float = 1e-5,
    rel_floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic grads of loss_fn() against central differences.

    loss_fn rebuilds the graph from current parameter values and returns the
    scalar loss node. Per-component step is h_base * (1 + |theta|). Failures
    are reported, not raised.
    """
    for p in params:
        p.zero_grad()
    backward(loss_fn())
    analytic = {p.name: _real_view(p.grad).copy() for p in params}

    report = GradCheckReport(tolerance=tolerance)
    for p in params:
        if not p.trainable:
            continue
        view = _real_view(p.value).ravel()
        an = analytic[p.name].ravel()
        worst = 0.0
        for i in range(view.size):
            orig = view[i]
            h = h_base * (1.0 + abs(orig))
            view[i] = orig + h
            lp = float(loss_fn().value)
            view[i] = orig - h
            lm = float(loss_fn().value)
            view[i] = orig
            fd = (lp - lm) / (2.0 * h)
            denom = max(abs(an[i]), abs(fd), rel_floor)
            worst = max(worst, abs(an[i] - fd) / denom)
        report.entries.append(
            GradCheckEntry(name=p.name, max_rel_err=worst, passed=worst <= tolerance)
        )
    return report
