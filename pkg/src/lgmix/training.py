"""Loss assembly, AdamW with step decay, and the training/eval/rollout loops.

All shuffling is derived from (seed, epoch) so an interrupted run resumed
from a checkpoint walks exactly the same batches as an uninterrupted one.
The test metric is the pure prediction error (no consistency term), which
is also what `evaluate` computes, so reported history entries and later
evaluations of the same checkpoint agree by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter
from .model import LgmOperator


class OptimizerError(RuntimeError):
    pass


@dataclass
class LossWeights:
    alpha: float = 1.0  # prediction error weight
    beta: float = 0.1  # input reconstruction (consistency) weight

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError("loss weights must be non-negative with alpha + beta > 0")


def _metric_node(pred: Node, target: np.ndarray, metric: str) -> Node:
    if metric == "mse":
        return ad.mse(pred, target)
    if metric == "relative_mse":
        return ad.relative_mse(pred, target)
    raise ValueError(f"unknown metric {metric!r}")


def compute_loss(model: LgmOperator, window: np.ndarray, target: np.ndarray,
                 weights: LossWeights, metric: str = "mse") -> Node:
    """alpha * metric(prediction, target) + beta * metric(reconstruction, input)."""
    weights.validate()
    window = np.ascontiguousarray(window, dtype=model.dtype)
    target = np.ascontiguousarray(target, dtype=model.dtype)
    pred, recon = model.forward_nodes(window)
    loss = ad.scale_const(_metric_node(pred, target, metric), weights.alpha)
    if weights.beta != 0.0:
        if model.config.consistency_target == "window":
            cmp = window
        else:
            cmp = window[:, -model.config.d_u :]
        loss = ad.add(loss, ad.scale_const(_metric_node(recon, cmp, metric), weights.beta))
    return loss


def lr_at_epoch(lr0: float, gamma: float, step_size: int, epoch: int) -> float:
    """Step decay: lr0 * gamma^floor(epoch / step_size)."""
    return lr0 * gamma ** (epoch // step_size)


class AdamW:
    """AdamW with decoupled weight decay; moments live on (re, im) real views."""

    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-4):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {p.name: np.zeros_like(self._view(p.value)) for p in self.params}
        self.v = {p.name: np.zeros_like(self._view(p.value)) for p in self.params}

    @staticmethod
    def _view(arr: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(arr):
            return arr.view(np.float64 if arr.dtype == np.complex128 else np.float32)
        return arr

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(self._view(p.grad))):
                raise OptimizerError(f"non-finite gradient for parameter {p.name!r}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p in self.params:
            g = self._view(p.grad)
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            w = self._view(p.value)
            w -= self.lr * (update + self.weight_decay * w)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for p in self.params:
            out[f"adam.m.{p.name}"] = self.m[p.name]
            out[f"adam.v.{p.name}"] = self.v[p.name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for p in self.params:
            self.m[p.name][...] = arrays[f"adam.m.{p.name}"]
            self.v[p.name][...] = arrays[f"adam.v.{p.name}"]
        self.step_count = step_count


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, epoch))))
    return rng.permutation(n)


def evaluate(model: LgmOperator, inputs: np.ndarray, targets: np.ndarray,
             metric: str = "mse", batch_size: int = 16, denorm_stats=None) -> float:
    """Mean per-sample prediction metric over a split.

    With `denorm_stats` the metric is taken in physical units: predictions
    and targets are denormalized (channel axis 1) before comparison.
    """
    if inputs.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty split")
    total = 0.0
    for at in range(0, inputs.shape[0], batch_size):
        wb = np.ascontiguousarray(inputs[at : at + batch_size], dtype=model.dtype)
        tb = np.ascontiguousarray(targets[at : at + batch_size], dtype=model.dtype)
        pred, _ = model.forward_nodes(wb)
        pv = pred.value
        if denorm_stats is not None:
            pv = denorm_stats.denormalize(pv, channel_axis=1)
            tb = denorm_stats.denormalize(tb, channel_axis=1)
        diff = (pv - tb).reshape(tb.shape[0], -1)
        per_sample = np.sum(diff * diff, axis=1)
        if metric == "relative_mse":
            tnorm = np.sum(tb.reshape(tb.shape[0], -1) ** 2, axis=1)
            if np.any(tnorm == 0):
                raise ValueError("relative_mse: zero-norm target sample")
            per_sample = per_sample / tnorm
        elif metric == "mse":
            per_sample = per_sample / diff.shape[1]
        else:
            raise ValueError(f"unknown metric {metric!r}")
        total += float(np.sum(per_sample))
    return total / inputs.shape[0]


def train(model: LgmOperator, train_inputs: np.ndarray, train_targets: np.ndarray,
          test_inputs: np.ndarray, test_targets: np.ndarray, *,
          epochs: int, batch_size: int, lr: float, gamma: float = 0.97,
          step_size: int = 6, weight_decay: float = 1e-4,
          weights: LossWeights | None = None, metric: str = "mse",
          seed: int = 0, start_epoch: int = 0, optimizer: AdamW | None = None,
          log_line=None) -> tuple[list[dict], AdamW]:
    """Run `epochs` epochs, returning (history, optimizer).

    `start_epoch` shifts the epoch index for LR decay and shuffling so that
    resumed runs replay the schedule of an uninterrupted run.
    """
    if train_inputs.shape[0] == 0:
        raise ValueError("training split is empty")
    weights = weights or LossWeights()
    weights.validate()
    if optimizer is None:
        optimizer = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    history: list[dict] = []
    n = train_inputs.shape[0]
    for e in range(start_epoch, start_epoch + epochs):
        optimizer.lr = lr_at_epoch(lr, gamma, step_size, e)
        order = _epoch_order(seed, e, n)
        batch_losses = []
        for at in range(0, n, batch_size):
            idx = order[at : at + batch_size]
            loss = compute_loss(model, train_inputs[idx], train_targets[idx],
                                weights, metric)
            model.zero_grad()
            ad.backward(loss)
            optimizer.step()
            batch_losses.append(float(loss.value))
        record = {
            "epoch": e,
            "train_loss": float(np.mean(batch_losses)),
            "test_loss": evaluate(model, test_inputs, test_targets, metric, batch_size),
            "lr": optimizer.lr,
        }
        history.append(record)
        if log_line is not None:
            log_line(
                f"epoch={record['epoch']} train_loss={record['train_loss']!r} "
                f"test_loss={record['test_loss']!r} lr={record['lr']!r}"
            )
    return history, optimizer


def rollout(model: LgmOperator, window: np.ndarray, steps: int) -> np.ndarray:
    """Autoregressive prediction; feeds each output back into the window.

    window: (d_u*(history+1), *spatial), normalized. Returns
    (steps, d_u, *spatial) in the same normalized space.
    """
    d_u = model.config.d_u
    if window.shape[0] != model.config.in_channels:
        raise ValueError(
            f"window has {window.shape[0]} channels, model expects {model.config.in_channels}"
        )
    frames = np.empty((steps, d_u) + window.shape[1:], dtype=model.dtype)
    current = np.ascontiguousarray(window, dtype=model.dtype)
    for s in range(steps):
        pred = model.model_forward(current)
        frames[s] = pred
        current = np.concatenate([current[d_u:], pred], axis=0)
    return frames
