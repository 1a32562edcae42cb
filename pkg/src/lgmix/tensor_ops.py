"""Strict-shape dense array algebra used by every layer.

Arrays are plain numpy ndarrays in row-major, channel-first layout:
``(channels, *spatial)`` for a single field, ``(batch, channels, *spatial)``
for batched fields. Complex arrays store interleaved (re, im) pairs in
memory, i.e. twice as many machine reals as elements. There is no implicit
broadcasting between fields; the only broadcast allowed is scalar * tensor.
Shape violations raise ``ShapeError`` naming both shapes rather than
silently broadcasting.

Channel contractions go through ``np.matmul`` on reshaped
``(..., channels, points)`` views, which keeps the inner loop a tight GEMV.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Incompatible operand shapes for a strict elementwise/channel op."""


def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes differ: {a.shape} vs {b.shape}")
    if np.iscomplexobj(a) != np.iscomplexobj(b):
        raise ShapeError(f"{op}: mixed real/complex operands")


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two identically shaped arrays."""
    _check_same(a, b, "hadamard")
    return a * b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same(a, b, "add")
    return a + b


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """alpha * x + y with strict shapes."""
    _check_same(x, y, "axpy")
    return alpha * x + y


def mean_all(x: np.ndarray) -> float:
    return float(np.mean(x))


def channel_map(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray | None = None,
    batched: bool = False,
) -> np.ndarray:
    """Per-grid-point affine map over the channel axis (a 1x1 convolution).

    x is (c_in, *spatial) or, with batched=True, (batch, c_in, *spatial);
    w is (c_out, c_in) and b is (c_out,). Every grid point gets the same
    channel mixing.
    """
    cax = 1 if batched else 0
    if x.ndim < cax + 1:
        raise ShapeError(f"channel_map: input rank {x.ndim} too small")
    c_in = x.shape[cax]
    if w.ndim != 2 or w.shape[1] != c_in:
        raise ShapeError(
            f"channel_map: weight shape {w.shape} does not accept {c_in} input channels"
        )
    c_out = w.shape[0]
    if b is not None and b.shape != (c_out,):
        raise ShapeError(f"channel_map: bias shape {b.shape} != ({c_out},)")
    spatial = x.shape[cax + 1 :]
    flat = x.reshape(x.shape[: cax + 1] + (-1,))  # (..., c_in, points)
    out = np.matmul(w, flat)
    if b is not None:
        out = out + b[:, None]
    return out.reshape(x.shape[:cax] + (c_out,) + spatial)


def slice_channels(
    x: np.ndarray, start: int, stop: int, batched: bool = False
) -> np.ndarray:
    cax = 1 if batched else 0
    n = x.shape[cax]
    if not (0 <= start < stop <= n):
        raise ShapeError(f"slice_channels: [{start}:{stop}] out of range for {n} channels")
    sl = [slice(None)] * x.ndim
    sl[cax] = slice(start, stop)
    return x[tuple(sl)]


def concat_channels(parts: list[np.ndarray], batched: bool = False) -> np.ndarray:
    """Stack fields along the channel axis; all other extents must agree."""
    if not parts:
        raise ShapeError("concat_channels: empty input list")
    cax = 1 if batched else 0
    ref = parts[0]
    for p in parts[1:]:
        if p.ndim != ref.ndim or p.shape[:cax] != ref.shape[:cax] or p.shape[cax + 1 :] != ref.shape[cax + 1 :]:
            raise ShapeError(
                f"concat_channels: incompatible shapes {ref.shape} vs {p.shape}"
            )
    return np.concatenate(parts, axis=cax)
