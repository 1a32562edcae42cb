"""Reference solvers that manufacture training data at desk scale.

Three generators:
  * 1D Kuramoto-Sivashinsky, integrated in Fourier space with the ETDRK4
    scheme of Kassam & Trefethen (SIAM J. Sci. Comput. 26, 2005).
  * 1D viscous Burgers, pseudo-spectral with 2/3-rule dealiasing, same
    ETDRK4 time stepping (the linear part is just diffusion).
  * 2D Darcy flow -div(a grad u) = 1 on the unit square with zero Dirichlet
    walls, coefficient fields drawn as thresholded Gaussian random fields,
    solved by conjugate gradients on a 5-point finite-volume stencil with
    harmonic-mean face coefficients.

Trajectories are independent: each one draws its initial condition (or
coefficient field) from an RNG stream derived from (seed, trajectory index),
so chunked or threaded generation produces identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import fourier


class SolverError(RuntimeError):
    pass


@dataclass
class TrajectorySpec:
    """Everything needed to regenerate a dataset deterministically."""

    pde: str = "ks1d"  # ks1d | burgers1d | darcy2d
    n: int = 256  # grid extent (darcy: n x n)
    length: float = 64.0  # periodic domain size (darcy is the unit square)
    nu: float = 0.01  # burgers viscosity
    dt_solver: float = 0.05
    stride: int = 5  # solver steps between snapshots
    n_snapshots: int = 41
    n_traj: int = 10
    burn_in: float = 50.0  # time units discarded before the first snapshot
    amplitude: float = 1.0
    init_modes: int = 3
    darcy_alpha: float = 2.0  # GRF spectral decay exponent
    darcy_tau: float = 3.0  # GRF inverse length scale
    darcy_low: float = 3.0
    darcy_high: float = 12.0
    split_frac: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        if self.pde not in ("ks1d", "burgers1d", "darcy2d"):
            raise ValueError(f"unknown pde {self.pde!r}")
        if not fourier.is_power_of_two(self.n):
            raise ValueError(f"grid extent must be a power of two, got {self.n}")
        if self.dt_solver <= 0:
            raise ValueError("dt_solver must be positive")
        if self.stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        if self.n_traj < 1 or self.n_snapshots < 1:
            raise ValueError("need at least one trajectory and one snapshot")
        if not (0.0 < self.split_frac < 1.0):
            raise ValueError("split_frac must be in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def default_spec(pde: str) -> TrajectorySpec:
    """Documented desk-scale defaults per equation."""
    if pde == "ks1d":
        return TrajectorySpec(pde="ks1d", n=256, length=64.0, dt_solver=0.05,
                              stride=5, n_snapshots=41, n_traj=10, burn_in=50.0,
                              amplitude=0.8, init_modes=3)
    if pde == "burgers1d":
        return TrajectorySpec(pde="burgers1d", n=128, length=1.0, nu=0.01,
                              dt_solver=0.002, stride=25, n_snapshots=11,
                              n_traj=50, burn_in=0.0, amplitude=0.8, init_modes=3)
    if pde == "darcy2d":
        return TrajectorySpec(pde="darcy2d", n=64, n_traj=120, n_snapshots=1)
    raise ValueError(f"unknown pde {pde!r}")


def _traj_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


# --- ETDRK4 machinery ---------------------------------------------------------


class Etdrk4Stepper:
    """Exponential time differencing RK4 for semi-linear spectral systems.

    Integrates d(v_hat)/dt = lin * v_hat + nonlinear(v_hat) where lin is a
    diagonal (real) spectral multiplier. Scheme coefficients come from the
    standard contour-integral evaluation over roots of unity.
    """

    def __init__(self, lin: np.ndarray, nonlinear, dt: float, n_contour: int = 32):
        self.nonlinear = nonlinear
        self.dt = dt
        roots = np.exp(1j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
        lr = dt * lin[:, None] + roots[None, :]
        exp_lr = np.exp(lr)
        self.e_full = np.exp(dt * lin)
        self.e_half = np.exp(0.5 * dt * lin)
        self.f0 = dt * ((np.exp(lr / 2.0) - 1.0) / lr).mean(axis=1).real
        self.f1 = dt * ((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr**2)) / lr**3).mean(axis=1).real
        self.f2 = dt * ((2.0 + lr + exp_lr * (lr - 2.0)) / lr**3).mean(axis=1).real
        self.f3 = dt * ((-4.0 - 3.0 * lr - lr**2 + exp_lr * (4.0 - lr)) / lr**3).mean(axis=1).real

    def step(self, v: np.ndarray) -> np.ndarray:
        n0 = self.nonlinear(v)
        a = self.e_half * v + self.f0 * n0
        na = self.nonlinear(a)
        b = self.e_half * v + self.f0 * na
        nb = self.nonlinear(b)
        c = self.e_half * a + self.f0 * (2.0 * nb - n0)
        nc = self.nonlinear(c)
        return self.e_full * v + self.f1 * n0 + 2.0 * self.f2 * (na + nb) + self.f3 * nc


def ks_stepper(n: int, length: float, dt: float) -> Etdrk4Stepper:
    """u_t = -u u_x - u_xx - u_xxxx, periodic on [0, length)."""
    q = 2.0 * np.pi * np.arange(n // 2 + 1) / length
    lin = q**2 - q**4

    def nonlinear(v_hat):
        u = fourier.irfft(v_hat, n, axis=-1)
        return -0.5j * q * fourier.rfft(u * u, axis=-1)

    return Etdrk4Stepper(lin, nonlinear, dt)


def burgers_stepper(n: int, length: float, nu: float, dt: float) -> Etdrk4Stepper:
    """u_t = -u u_x + nu u_xx, periodic, 2/3-rule dealiasing on the product."""
    q = 2.0 * np.pi * np.arange(n // 2 + 1) / length
    lin = -nu * q**2
    keep = np.arange(n // 2 + 1) <= n // 3

    def nonlinear(v_hat):
        u = fourier.irfft(v_hat, n, axis=-1)
        return -0.5j * q * (fourier.rfft(u * u, axis=-1) * keep)

    return Etdrk4Stepper(lin, nonlinear, dt)


def _random_periodic_field(rng: np.random.Generator, n: int, length: float,
                           amplitude: float, init_modes: int) -> np.ndarray:
    x = np.arange(n) * (length / n)
    u = np.zeros(n)
    for k in range(1, init_modes + 1):
        coeff = amplitude * rng.uniform(-1.0, 1.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        u += coeff * np.cos(2.0 * np.pi * k * x / length + phase)
    return u


def _integrate_1d(spec: TrajectorySpec, stepper: Etdrk4Stepper, u0: np.ndarray) -> np.ndarray:
    """March a batch of initial conditions, returning (traj, snap, 1, n)."""
    n_burn = int(round(spec.burn_in / spec.dt_solver))
    v = fourier.rfft(u0, axis=-1)
    for step in range(n_burn):
        v = stepper.step(v)
        if step % 200 == 0 and not np.all(np.isfinite(v)):
            raise SolverError(f"{spec.pde}: blow-up during burn-in at step {step}")
    snaps = np.empty((u0.shape[0], spec.n_snapshots, 1, spec.n))
    for s in range(spec.n_snapshots):
        if s > 0:
            for _ in range(spec.stride):
                v = stepper.step(v)
        u = fourier.irfft(v, spec.n, axis=-1)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"{spec.pde}: non-finite state at snapshot {s}")
        snaps[:, s, 0, :] = u
    return snaps


def solve_ks(spec: TrajectorySpec, traj_slice: slice | None = None) -> np.ndarray:
    spec.validate()
    lo, hi = _slice_bounds(traj_slice, spec.n_traj)
    u0 = np.stack([
        _random_periodic_field(_traj_rng(spec.seed, i), spec.n, spec.length,
                               spec.amplitude, spec.init_modes)
        for i in range(lo, hi)
    ])
    stepper = ks_stepper(spec.n, spec.length, spec.dt_solver)
    return _integrate_1d(spec, stepper, u0)


def solve_burgers(spec: TrajectorySpec, traj_slice: slice | None = None) -> np.ndarray:
    spec.validate()
    if spec.nu <= 0:
        raise ValueError("burgers requires nu > 0")
    lo, hi = _slice_bounds(traj_slice, spec.n_traj)
    u0 = np.stack([
        _random_periodic_field(_traj_rng(spec.seed, i), spec.n, spec.length,
                               spec.amplitude, spec.init_modes)
        for i in range(lo, hi)
    ])
    stepper = burgers_stepper(spec.n, spec.length, spec.nu, spec.dt_solver)
    return _integrate_1d(spec, stepper, u0)


def _slice_bounds(traj_slice: slice | None, n_traj: int) -> tuple[int, int]:
    if traj_slice is None:
        return 0, n_traj
    lo, hi, step = traj_slice.indices(n_traj)
    if step != 1:
        raise ValueError("trajectory slices must be contiguous")
    return lo, hi


# --- Darcy flow ---------------------------------------------------------------


def gaussian_random_field(rng: np.random.Generator, n: int, alpha: float, tau: float) -> np.ndarray:
    """Smooth zero-mean field via spectral synthesis with power-law decay."""
    noise = rng.standard_normal((n, n))
    spec = fourier.rfft2(noise)
    k1 = np.concatenate([np.arange(n // 2 + 1), np.arange(-(n // 2) + 1, 0)])
    k2 = np.arange(n // 2 + 1)
    ksq = k1[:, None] ** 2 + k2[None, :] ** 2
    filt = (4.0 * np.pi**2 * ksq + tau**2) ** (-alpha / 2.0)
    filt[0, 0] = 0.0  # drop the mean
    return fourier.irfft2(spec * filt, (n, n))


def threshold_coefficients(field: np.ndarray, low: float, high: float) -> np.ndarray:
    return np.where(field >= 0.0, high, low)


def darcy_operator(a: np.ndarray):
    """Matrix-free 5-point finite-volume operator for -div(a grad u).

    Cell-centered on the unit square with u = 0 on the walls; interior face
    coefficients are harmonic means, wall faces use the half-cell distance.
    Returns apply(u) for (n, n) cell averages.
    """
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"coefficient field must be square, got {a.shape}")
    if np.any(a <= 0):
        raise ValueError("darcy coefficients must be strictly positive")
    inv_h2 = float(n) ** 2
    harm_x = 2.0 * a[:-1, :] * a[1:, :] / (a[:-1, :] + a[1:, :])
    harm_y = 2.0 * a[:, :-1] * a[:, 1:] / (a[:, :-1] + a[:, 1:])
    tx = np.vstack([2.0 * a[:1, :], harm_x, 2.0 * a[-1:, :]])  # (n+1, n)
    ty = np.hstack([2.0 * a[:, :1], harm_y, 2.0 * a[:, -1:]])  # (n, n+1)

    def apply(u: np.ndarray) -> np.ndarray:
        uw = np.vstack([np.zeros((1, n)), u[:-1, :]])
        ue = np.vstack([u[1:, :], np.zeros((1, n))])
        us = np.hstack([np.zeros((n, 1)), u[:, :-1]])
        un = np.hstack([u[:, 1:], np.zeros((n, 1))])
        out = tx[:-1, :] * (u - uw) + tx[1:, :] * (u - ue)
        out += ty[:, :-1] * (u - us) + ty[:, 1:] * (u - un)
        return out * inv_h2

    return apply


def solve_darcy_field(a: np.ndarray, f: np.ndarray, tol: float = 1e-10,
                      max_iter: int | None = None) -> np.ndarray:
    """Conjugate gradients down to ||r|| <= tol * ||f||."""
    apply_op = darcy_operator(a)
    n = a.shape[0]
    if max_iter is None:
        max_iter = 20 * n * n
    f_norm = np.sqrt(np.sum(f * f))
    if f_norm == 0.0:
        return np.zeros_like(f)
    u = np.zeros_like(f)
    r = f.copy()
    d = r.copy()
    rr = np.sum(r * r)
    target = tol * f_norm
    for _ in range(max_iter):
        if np.sqrt(rr) <= target:
            return u
        ad_ = apply_op(d)
        alpha = rr / np.sum(d * ad_)
        u = u + alpha * d
        r = r - alpha * ad_
        rr_new = np.sum(r * r)
        d = r + (rr_new / rr) * d
        rr = rr_new
    if np.sqrt(rr) <= target:
        return u
    raise SolverError(f"darcy CG did not reach {tol:.1e}*||f|| in {max_iter} iterations")


def solve_darcy(spec: TrajectorySpec, traj_slice: slice | None = None) -> np.ndarray:
    """Coefficient/solution pairs, shaped (samples, 1, 2, n, n), channels (a, u)."""
    spec.validate()
    lo, hi = _slice_bounds(traj_slice, spec.n_traj)
    n = spec.n
    f = np.ones((n, n))
    out = np.empty((hi - lo, 1, 2, n, n))
    for row, i in enumerate(range(lo, hi)):
        rng = _traj_rng(spec.seed, i)
        field = gaussian_random_field(rng, n, spec.darcy_alpha, spec.darcy_tau)
        a = threshold_coefficients(field, spec.darcy_low, spec.darcy_high)
        u = solve_darcy_field(a, f)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"darcy2d: non-finite solution for sample {i}")
        out[row, 0, 0] = a
        out[row, 0, 1] = u
    return out


def generate(spec: TrajectorySpec, threads: int = 1) -> np.ndarray:
    """Run the spec's solver; trajectory chunks may run on worker threads."""
    solver = {"ks1d": solve_ks, "burgers1d": solve_burgers, "darcy2d": solve_darcy}[spec.pde]
    if threads <= 1 or spec.n_traj == 1:
        return solver(spec)
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, spec.n_traj, min(threads, spec.n_traj) + 1).astype(int)
    chunks = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda s: solver(spec, s), chunks))
    return np.concatenate(parts, axis=0)
