"""Radix-2 FFT routines for power-of-two grids.

All transforms are iterative Cooley-Tukey with precomputed bit-reversal
permutations and per-stage twiddle tables. Only power-of-two extents are
supported; anything else is rejected up front. The reduction order inside
each 1-D transform is fixed, so results are bitwise reproducible for a
given input regardless of how callers parallelize around these functions.

Conventions: forward transforms are unnormalized, the 1/N factor is applied
on the inverse. Real transforms return the half spectrum of length N//2 + 1.
"""

from __future__ import annotations

import numpy as np

_BITREV_CACHE: dict[int, np.ndarray] = {}
_TWIDDLE_CACHE: dict[tuple[int, str], list[np.ndarray]] = {}


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _require_pow2(n: int) -> None:
    if not is_power_of_two(n):
        raise ValueError(f"transform length must be a power of two, got {n}")


def _bit_reversal(n: int) -> np.ndarray:
    perm = _BITREV_CACHE.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        perm = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            perm |= ((idx >> b) & 1) << (bits - 1 - b)
        _BITREV_CACHE[n] = perm
    return perm


def _twiddles(n: int, dtype: np.dtype) -> list[np.ndarray]:
    key = (n, np.dtype(dtype).name)
    tables = _TWIDDLE_CACHE.get(key)
    if tables is None:
        tables = []
        m = 2
        while m <= n:
            # exp(-2*pi*i*k/m) for the first half of each butterfly group
            tables.append(np.exp(-2j * np.pi * np.arange(m // 2) / m).astype(dtype))
            m *= 2
        _TWIDDLE_CACHE[key] = tables
    return tables


def _complex_dtype_for(x: np.ndarray) -> np.dtype:
    if x.dtype in (np.complex64, np.float32):
        return np.dtype(np.complex64)
    return np.dtype(np.complex128)


def fft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Complex DFT along `axis`, length must be a power of two."""
    cdtype = _complex_dtype_for(x)
    x = np.asarray(x)
    n = x.shape[axis]
    _require_pow2(n)
    moved = axis not in (-1, x.ndim - 1)
    if moved:
        x = np.moveaxis(x, axis, -1)
    shape = x.shape
    # bit-reversed gather also produces the contiguous working copy
    y = np.ascontiguousarray(x.reshape(-1, n)[:, _bit_reversal(n)], dtype=cdtype)
    if n > 1:
        buf = np.empty_like(y)
        for s, tw in enumerate(_twiddles(n, cdtype)):
            m = 2 << s
            half = m >> 1
            v = y.reshape(-1, n // m, m)
            o = buf.reshape(-1, n // m, m)
            odd = v[..., half:] * tw
            np.add(v[..., :half], odd, out=o[..., :half])
            np.subtract(v[..., :half], odd, out=o[..., half:])
            y, buf = buf, y
    y = y.reshape(shape)
    if moved:
        y = np.moveaxis(y, -1, axis)
    return y


def ifft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse complex DFT along `axis`, with the 1/N normalization."""
    n = np.asarray(x).shape[axis]
    return np.conj(fft(np.conj(x), axis=axis)) / n


def rfft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Real-input DFT along `axis`; returns modes 0..N/2 (half spectrum)."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise ValueError("rfft expects a real-valued array")
    n = x.shape[axis]
    full = fft(x, axis=axis)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(0, n // 2 + 1)
    return np.ascontiguousarray(full[tuple(sl)])


def irfft(spec: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Inverse of `rfft` back to a length-`n` real signal.

    `spec` may hold fewer than n//2 + 1 modes (a truncated spectrum); the
    missing high modes are treated as zero.
    """
    spec = np.asarray(spec)
    _require_pow2(n)
    m_full = n // 2 + 1
    m = spec.shape[axis]
    if m > m_full:
        raise ValueError(f"spectrum has {m} modes, max {m_full} for length {n}")
    spec = np.moveaxis(spec, axis, -1)
    if m < m_full:
        pad = np.zeros(spec.shape[:-1] + (m_full - m,), dtype=spec.dtype)
        spec = np.concatenate([spec, pad], axis=-1)
    if n > 1:
        # Hermitian extension: modes N/2+1 .. N-1 mirror the conjugates
        tail = np.conj(spec[..., -2:0:-1])
        full = np.concatenate([spec, tail], axis=-1)
    else:
        full = spec
    out = ifft(full, axis=-1).real
    return np.moveaxis(out, -1, axis)


def rfft2(x: np.ndarray) -> np.ndarray:
    """2-D real transform over the last two axes.

    Half spectrum on the last axis, full positive/negative wavenumbers on
    the second-to-last axis.
    """
    return fft(rfft(x, axis=-1), axis=-2)


def irfft2(spec: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Inverse 2-D real transform back to spatial extents `shape`."""
    n1, n2 = shape
    if spec.shape[-2] != n1:
        raise ValueError(f"axis -2 has {spec.shape[-2]} modes, expected {n1}")
    return irfft(ifft(spec, axis=-2), n2, axis=-1)


# Adjoint maps of the real transforms, used by the reverse-mode engine.
# Complex adjoints follow the convention grad = dL/dRe + i*dL/dIm.

def rfft_adjoint(grad_spec: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Adjoint of `rfft`: complex cotangent of the half spectrum -> real."""
    grad_spec = np.moveaxis(np.asarray(grad_spec), axis, -1)
    m_full = n // 2 + 1
    m = grad_spec.shape[-1]
    if m < m_full:
        pad = np.zeros(grad_spec.shape[:-1] + (m_full - m,), dtype=grad_spec.dtype)
        grad_spec = np.concatenate([grad_spec, pad], axis=-1)
    zeros = np.zeros(grad_spec.shape[:-1] + (n - m_full,), dtype=grad_spec.dtype)
    padded = np.concatenate([grad_spec, zeros], axis=-1)
    # sum_k g_k exp(+2*pi*i*j*k/n) realized through the forward transform
    out = fft(np.conj(padded), axis=-1).real
    return np.moveaxis(out, -1, axis)


def irfft_adjoint(grad_out: np.ndarray, m: int, axis: int = -1) -> np.ndarray:
    """Adjoint of `irfft`: real cotangent of the signal -> `m` complex modes."""
    grad_out = np.moveaxis(np.asarray(grad_out), axis, -1)
    n = grad_out.shape[-1]
    spec = fft(grad_out, axis=-1)[..., :m] / n
    # interior modes appear twice in the Hermitian extension
    has_nyquist = m == n // 2 + 1
    hi = m - 1 if has_nyquist else m
    spec[..., 1:hi] *= 2.0
    spec[..., 0] = spec[..., 0].real
    if has_nyquist:
        spec[..., -1] = spec[..., -1].real
    return np.moveaxis(spec, -1, axis)
