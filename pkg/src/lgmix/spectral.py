"""Truncated spectral convolution: the global half of an LGM transform.

A field is taken to frequency space with the real FFT, the lowest retained
modes are mixed by trainable complex weights, everything above the cutoff
is dropped, and the result comes back on the grid. Because the weights are
indexed by wavenumber rather than by grid position, the same weights apply
at any power-of-two resolution that can hold the retained band.

Weight layout:
  1D: (modes, d_out, d_in) over wavenumbers 0 .. modes-1.
  2D: (2*modes1, modes2, d_out, d_in); axis 0 holds wavenumbers
      0 .. modes1-1 followed by -modes1 .. -1, axis 1 is the half spectrum.
With diag=True the per-mode mixing matrix is restricted to a diagonal and
the layout drops the d_in axis (d_out == d_in).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fourier
from .tensor_ops import ShapeError


@dataclass
class SpectralWeights:
    """Trainable truncated Fourier coefficients of a global kernel."""

    modes: tuple[int, ...]  # retained mode count per spatial axis
    d_in: int
    d_out: int
    w: np.ndarray  # complex
    diag: bool = False

    @property
    def ndim_spatial(self) -> int:
        return len(self.modes)

    def check_resolution(self, spatial: tuple[int, ...]) -> None:
        """Retained modes must fit in the grid the weights are applied at."""
        if len(spatial) != len(self.modes):
            raise ShapeError(
                f"spectral weights for {len(self.modes)}D applied to {len(spatial)}D field"
            )
        for n in spatial:
            if not fourier.is_power_of_two(n):
                raise ValueError(f"spatial extent {n} is not a power of two")
        if len(self.modes) == 1:
            if self.modes[0] > spatial[0] // 2 + 1:
                raise ValueError(
                    f"{self.modes[0]} retained modes exceed {spatial[0] // 2 + 1} "
                    f"available at resolution {spatial[0]}"
                )
        else:
            k1, k2 = self.modes
            n1, n2 = spatial
            if 2 * k1 > n1:
                raise ValueError(
                    f"axis-0 retained modes {k1} need resolution >= {2 * k1}, got {n1}"
                )
            if k2 > n2 // 2 + 1:
                raise ValueError(
                    f"axis-1 retained modes {k2} exceed {n2 // 2 + 1} at resolution {n2}"
                )


def expected_weight_shape(
    modes: tuple[int, ...], d_in: int, d_out: int, diag: bool
) -> tuple[int, ...]:
    if diag and d_in != d_out:
        raise ValueError("diagonal spectral weights require d_in == d_out")
    if len(modes) == 1:
        mode_shape: tuple[int, ...] = (modes[0],)
    else:
        mode_shape = (2 * modes[0], modes[1])
    return mode_shape + ((d_out,) if diag else (d_out, d_in))


def init_spectral_weights(
    rng: np.random.Generator,
    d_in: int,
    d_out: int,
    modes: tuple[int, ...],
    diag: bool = False,
    dtype: np.dtype = np.float64,
) -> SpectralWeights:
    """Uniform complex init in [-s, s] per part with s = 1/(d_in*d_out)."""
    shape = expected_weight_shape(modes, d_in, d_out, diag)
    s = 1.0 / (d_in * d_out)
    re = rng.uniform(-s, s, size=shape)
    im = rng.uniform(-s, s, size=shape)
    cdtype = np.complex64 if np.dtype(dtype) == np.float32 else np.complex128
    return SpectralWeights(
        modes=tuple(modes), d_in=d_in, d_out=d_out, w=(re + 1j * im).astype(cdtype), diag=diag
    )


def _mix_modes(w: np.ndarray, spec_sel: np.ndarray, diag: bool, ndim: int) -> np.ndarray:
    # spec_sel: (batch, d_in, *modes); returns (batch, d_out, *modes)
    if ndim == 1:
        if diag:
            return w.T[None, :, :] * spec_sel  # (1, d, k) * (b, d, k)
        return np.einsum("koi,bik->bok", w, spec_sel)
    if diag:
        return np.moveaxis(w, -1, 0)[None] * spec_sel
    return np.einsum("xyoi,bixy->boxy", w, spec_sel)


def _mix_modes_adjoint(
    w: np.ndarray, grad_sel: np.ndarray, spec_sel: np.ndarray, diag: bool, ndim: int
) -> tuple[np.ndarray, np.ndarray]:
    # returns (grad_w, grad_spec_sel) under the dL/dRe + i*dL/dIm convention
    if ndim == 1:
        if diag:
            grad_w = np.sum(grad_sel * np.conj(spec_sel), axis=0).T
            grad_spec = np.conj(w).T[None] * grad_sel
        else:
            grad_w = np.einsum("bok,bik->koi", grad_sel, np.conj(spec_sel))
            grad_spec = np.einsum("koi,bok->bik", np.conj(w), grad_sel)
    else:
        if diag:
            grad_w = np.moveaxis(np.sum(grad_sel * np.conj(spec_sel), axis=0), 0, -1)
            grad_spec = np.moveaxis(np.conj(w), -1, 0)[None] * grad_sel
        else:
            grad_w = np.einsum("boxy,bixy->xyoi", grad_sel, np.conj(spec_sel))
            grad_spec = np.einsum("xyoi,boxy->bixy", np.conj(w), grad_sel)
    return grad_w, grad_spec


def _select_modes_1d(spec: np.ndarray, k: int) -> np.ndarray:
    return spec[..., :k]


def _select_modes_2d(spec: np.ndarray, k1: int, k2: int) -> np.ndarray:
    top = spec[..., :k1, :k2]
    bottom = spec[..., spec.shape[-2] - k1 :, :k2]
    return np.concatenate([top, bottom], axis=-2)


def spectral_multiply(
    c: np.ndarray, weights: SpectralWeights, batched: bool = False
) -> np.ndarray:
    """Apply the truncated spectral kernel to a real field.

    c is (d_in, *spatial) or (batch, d_in, *spatial); output swaps d_in for
    d_out. Output is band-limited to the retained modes by construction.
    """
    out, _ = spectral_multiply_with_cache(c, weights, batched=batched)
    return out


def spectral_multiply_with_cache(
    c: np.ndarray, weights: SpectralWeights, batched: bool = False
):
    """Forward pass that also returns what the backward pass needs."""
    squeeze = not batched
    if squeeze:
        c = c[None]
    ndim = weights.ndim_spatial
    if c.ndim != 2 + ndim:
        raise ShapeError(
            f"spectral_multiply: field rank {c.ndim - 1} does not match {ndim} spatial axes"
        )
    if c.shape[1] != weights.d_in:
        raise ShapeError(
            f"spectral_multiply: {c.shape[1]} channels, weights expect {weights.d_in}"
        )
    spatial = c.shape[2:]
    weights.check_resolution(spatial)

    if ndim == 1:
        (n,) = spatial
        k = weights.modes[0]
        spec = fourier.rfft(c, axis=-1)
        spec_sel = _select_modes_1d(spec, k)
        out_sel = _mix_modes(weights.w, spec_sel, weights.diag, 1)
        out_spec = np.zeros((c.shape[0], weights.d_out, n // 2 + 1), dtype=spec.dtype)
        out_spec[..., :k] = out_sel
        out = fourier.irfft(out_spec, n, axis=-1)
    else:
        n1, n2 = spatial
        k1, k2 = weights.modes
        spec = fourier.rfft2(c)
        spec_sel = _select_modes_2d(spec, k1, k2)
        out_sel = _mix_modes(weights.w, spec_sel, weights.diag, 2)
        out_spec = np.zeros(
            (c.shape[0], weights.d_out, n1, n2 // 2 + 1), dtype=spec.dtype
        )
        out_spec[..., :k1, :k2] = out_sel[..., :k1, :]
        out_spec[..., n1 - k1 :, :k2] = out_sel[..., k1:, :]
        out = fourier.irfft2(out_spec, (n1, n2))

    if squeeze:
        return out[0], spec_sel
    return out, spec_sel


def spectral_multiply_backward(
    grad_out: np.ndarray,
    spec_sel: np.ndarray,
    weights: SpectralWeights,
    spatial: tuple[int, ...],
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of `spectral_multiply` for batched input.

    Returns (grad_c, grad_w); grad_w uses the dL/dRe + i*dL/dIm convention.
    """
    ndim = weights.ndim_spatial
    if ndim == 1:
        (n,) = spatial
        k = weights.modes[0]
        grad_spec_full = fourier.irfft_adjoint(grad_out, n // 2 + 1, axis=-1)
        grad_sel = grad_spec_full[..., :k]
        grad_w, grad_spec_sel = _mix_modes_adjoint(
            weights.w, grad_sel, spec_sel, weights.diag, 1
        )
        grad_c_spec = np.zeros(
            grad_spec_sel.shape[:2] + (n // 2 + 1,), dtype=grad_spec_sel.dtype
        )
        grad_c_spec[..., :k] = grad_spec_sel
        grad_c = fourier.rfft_adjoint(grad_c_spec, n, axis=-1)
    else:
        n1, n2 = spatial
        k1, k2 = weights.modes
        m2 = n2 // 2 + 1
        # adjoint of irfft2 = adjoint(irfft last) then adjoint(ifft axis -2)
        g = fourier.irfft_adjoint(grad_out, m2, axis=-1)
        g = fourier.fft(g, axis=-2) / n1
        grad_sel = _select_modes_2d(g, k1, k2)
        grad_w, grad_spec_sel = _mix_modes_adjoint(
            weights.w, grad_sel, spec_sel, weights.diag, 2
        )
        scat = np.zeros(grad_spec_sel.shape[:2] + (n1, m2), dtype=grad_spec_sel.dtype)
        scat[..., :k1, :k2] = grad_spec_sel[..., :k1, :]
        scat[..., n1 - k1 :, :k2] = grad_spec_sel[..., k1:, :]
        # adjoint of rfft2 = adjoint(fft axis -2) then adjoint(rfft last)
        scat = np.conj(fourier.fft(np.conj(scat), axis=-2))
        grad_c = fourier.rfft_adjoint(scat, n2, axis=-1)
    return grad_c, grad_w
