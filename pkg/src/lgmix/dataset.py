"""Trajectory containers, min-max normalization, and sliding-window pairs.

A dataset is an array of snapshots shaped (traj, time, channels, *spatial)
plus per-trajectory split labels. Time-dependent equations turn into
window/target pairs {[u_{i-k} ... u_i], u_{i+1}}; the Darcy dataset maps
its coefficient channel to its solution channel directly.

Normalization statistics are per channel, computed on the training split
only, and travel with checkpoints rather than dataset files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NormStats:
    """Per-channel min/max over the training split."""

    mins: np.ndarray  # (channels,)
    maxs: np.ndarray

    def validate(self) -> None:
        if np.any(self.maxs <= self.mins):
            bad = np.nonzero(self.maxs <= self.mins)[0].tolist()
            raise ValueError(f"degenerate channels (max <= min) at indices {bad}")

    def normalize(self, x: np.ndarray, channel_axis: int) -> np.ndarray:
        shape = [1] * x.ndim
        shape[channel_axis] = -1
        lo = self.mins.reshape(shape)
        hi = self.maxs.reshape(shape)
        return (x - lo) / (hi - lo)

    def denormalize(self, x: np.ndarray, channel_axis: int) -> np.ndarray:
        shape = [1] * x.ndim
        shape[channel_axis] = -1
        lo = self.mins.reshape(shape)
        hi = self.maxs.reshape(shape)
        return x * (hi - lo) + lo

    def select(self, idx: list[int]) -> "NormStats":
        return NormStats(self.mins[idx], self.maxs[idx])


def fit_norm_stats(data: np.ndarray, channel_axis: int = 2) -> NormStats:
    axes = tuple(i for i in range(data.ndim) if i != channel_axis)
    stats = NormStats(mins=data.min(axis=axes), maxs=data.max(axis=axes))
    stats.validate()
    return stats


def build_windows(traj: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding input/target pairs from one trajectory (time, ch, *spatial).

    Inputs stack the k+1 frames oldest-first along channels; the target is
    the following frame. A length-T trajectory yields T - k - 1 pairs.
    """
    t = traj.shape[0]
    if t < k + 2:
        raise ValueError(f"trajectory length {t} too short for history {k}")
    n_pairs = t - k - 1
    ch = traj.shape[1]
    inputs = np.empty((n_pairs, ch * (k + 1)) + traj.shape[2:], dtype=traj.dtype)
    targets = np.empty((n_pairs, ch) + traj.shape[2:], dtype=traj.dtype)
    for p in range(n_pairs):
        frames = [traj[p + j] for j in range(k + 1)]
        inputs[p] = np.concatenate(frames, axis=0)
        targets[p] = traj[p + k + 1]
    return inputs, targets


class TrajectoryDataset:
    """Snapshot collection with split labels and window assembly."""

    def __init__(self, data: np.ndarray, pde: str, channel_names: list[str],
                 split: list[str], spec_echo: dict):
        if data.ndim < 4:
            raise ValueError(f"expected (traj, time, ch, *spatial), got shape {data.shape}")
        if len(split) != data.shape[0]:
            raise ValueError(f"{len(split)} split labels for {data.shape[0]} trajectories")
        if len(channel_names) != data.shape[2]:
            raise ValueError(
                f"{len(channel_names)} channel names for {data.shape[2]} channels"
            )
        self.data = data
        self.pde = pde
        self.channel_names = channel_names
        self.split = list(split)
        self.spec_echo = spec_echo

    @property
    def is_pairs(self) -> bool:
        # Darcy samples carry the (input, solution) pair in their channels
        return self.pde == "darcy2d"

    @property
    def spatial(self) -> tuple[int, ...]:
        return tuple(self.data.shape[3:])

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == split]

    def fit_norm_stats(self) -> NormStats:
        idx = self.indices("train")
        if not idx:
            raise ValueError("dataset has no training trajectories")
        return fit_norm_stats(self.data[idx], channel_axis=2)

    def window_pairs(self, split: str, k: int, stats: NormStats | None
                     ) -> tuple[np.ndarray, np.ndarray]:
        """Normalized (inputs, targets) for every trajectory in a split."""
        idx = self.indices(split)
        if not idx:
            raise ValueError(f"dataset has no {split!r} trajectories")
        data = self.data[idx]
        if stats is not None:
            data = stats.normalize(data, channel_axis=2)
        if self.is_pairs:
            # channels are (coefficient, solution); history is not used
            inputs = data[:, 0, :1]
            targets = data[:, 0, 1:]
            return np.ascontiguousarray(inputs), np.ascontiguousarray(targets)
        ins, tgts = [], []
        for t in range(data.shape[0]):
            i, g = build_windows(data[t], k)
            ins.append(i)
            tgts.append(g)
        return np.concatenate(ins, axis=0), np.concatenate(tgts, axis=0)

    def model_channels(self) -> tuple[int, int]:
        """(input channels per frame, output channels) the model should use."""
        if self.is_pairs:
            return 1, 1
        return self.data.shape[2], self.data.shape[2]


def assign_split(n_traj: int, split_frac: float) -> list[str]:
    """Leading fraction trains, the rest tests; never splits a trajectory."""
    n_train = int(round(n_traj * split_frac))
    n_train = min(max(n_train, 1), n_traj - 1) if n_traj > 1 else 1
    return ["train"] * n_train + ["test"] * (n_traj - n_train)
