"""The local-global mixing operator network.

The network advances a PDE state one step: a lift map widens the input
channels, a projection reduces them to a compact latent field, a stack of
mixing layers evolves that latent field like a time integrator, and the
inverse maps return to physical channels. All pointwise maps have kernel
size 1, so one set of weights runs at any power-of-two resolution that can
hold the retained spectral band.

Layer anatomy:
  * transform (linear kind):    local channel map of the latent field; the
    global factor is the constant-one field, so no product is taken.
  * transform (nonlinear kind): elementwise product of a local channel map
    and a truncated spectral convolution of the same field. The product
    creates sum/difference harmonics, which is what lets the network
    populate frequencies the input never contained.
  * layer: sum of the linear transforms plus a local output map applied to
    the sum of the nonlinear transforms.
  * stack: out = c0 + sum_l dt_l * F_l(state_{l-1}) with
    state_l = act(state_{l-1} + F_l(state_{l-1})); dt_l are learnable
    scalars, intermediate states are activated, the final output is not.

Ablation variants rewire pieces of the above and are used to check that
each mechanism earns its keep.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from . import fourier, spectral
from .autodiff import Node, Parameter

VARIANTS = (
    "full",
    "local-only",
    "global-only",
    "linear-only",
    "nonlinear-only",
    "parallel-only",
    "hierarchical-only",
)


@dataclass
class ModelConfig:
    d_u: int = 1  # physical channels per frame
    spatial_ndim: int = 1
    d_m: int = 32  # latent channels; the lift width is fixed at 2*d_m
    depth: int = 2  # number of mixing layers
    n_linear: int = 1  # linear transforms per layer
    n_nonlinear: int = 1  # nonlinear transforms per layer
    modes: tuple[int, ...] = (12,)  # retained spectral modes per axis
    history: int = 0  # extra past frames in the input window
    activation: str = "gelu"
    final_activation: bool = False
    spectral_diag: bool = False
    consistency_target: str = "window"  # "window" | "last_frame"
    variant: str = "full"

    @property
    def d_v(self) -> int:
        return 2 * self.d_m

    @property
    def in_channels(self) -> int:
        return self.d_u * (self.history + 1)

    @property
    def out_channels(self) -> int:
        # the inverse lift reconstructs the full window in "window" mode
        if self.consistency_target == "window":
            return self.in_channels
        return self.d_u

    def validate(self) -> None:
        if self.d_u < 1 or self.d_m < 1 or self.depth < 1 or self.history < 0:
            raise ValueError("d_u, d_m >= 1, depth >= 1, history >= 0 required")
        if self.spatial_ndim not in (1, 2):
            raise ValueError(f"spatial_ndim must be 1 or 2, got {self.spatial_ndim}")
        if len(self.modes) != self.spatial_ndim:
            raise ValueError(
                f"{len(self.modes)} mode counts given for {self.spatial_ndim} spatial axes"
            )
        if any(m < 1 for m in self.modes):
            raise ValueError("retained mode counts must be >= 1")
        if self.activation not in ("gelu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.consistency_target not in ("window", "last_frame"):
            raise ValueError(f"unknown consistency_target {self.consistency_target!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant not in ("linear-only", "nonlinear-only"):
            if self.n_linear < 1 or self.n_nonlinear < 1:
                raise ValueError("n_linear and n_nonlinear must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modes"] = list(self.modes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["modes"] = tuple(d["modes"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    s = np.sqrt(1.0 / fan_in)
    return rng.uniform(-s, s, size=shape).astype(dtype)


class _ChannelMap:
    """kernel-size-1 affine map over channels, as a parameter pair."""

    def __init__(self, params, name, d_in, d_out, rng, dtype):
        self.w = Parameter(f"{name}.w", _uniform(rng, (d_out, d_in), d_in, dtype))
        self.b = Parameter(f"{name}.b", _uniform(rng, (d_out,), d_in, dtype))
        params[self.w.name] = self.w
        params[self.b.name] = self.b

    def __call__(self, x: Node) -> Node:
        return ad.channel_map(x, ad.param_node(self.w), ad.param_node(self.b))


class _LgmTransform:
    """One local-global mixing transform acting on the latent field."""

    def __init__(self, params, name, kind, cfg: ModelConfig, rng, dtype):
        self.kind = kind
        use_local = True
        use_global = kind == "nonlinear"
        if kind == "nonlinear":
            if cfg.variant == "local-only":
                use_global = False
            elif cfg.variant == "global-only":
                use_local = False
        self.local = (
            _ChannelMap(params, f"{name}.loc", cfg.d_m, cfg.d_m, rng, dtype)
            if use_local
            else None
        )
        self.spec = None
        self.spec_param = None
        if use_global:
            self.spec = spectral.init_spectral_weights(
                rng, cfg.d_m, cfg.d_m, cfg.modes, diag=cfg.spectral_diag, dtype=dtype
            )
            self.spec_param = Parameter(f"{name}.glob.w", self.spec.w)
            self.spec.w = self.spec_param.value  # alias the trainable storage
            params[self.spec_param.name] = self.spec_param

    def __call__(self, c: Node) -> Node:
        if self.spec is None:
            return self.local(c)
        g = ad.spectral_multiply(c, ad.param_node(self.spec_param), self.spec)
        if self.local is None:
            return g
        return ad.hadamard(self.local(c), g)


class _LgmLayer:
    """Sum of linear transforms plus mapped sum of nonlinear transforms."""

    def __init__(self, params, name, cfg: ModelConfig, rng, dtype):
        n_lin = 0 if cfg.variant == "nonlinear-only" else cfg.n_linear
        n_non = 0 if cfg.variant == "linear-only" else cfg.n_nonlinear
        self.linear = [
            _LgmTransform(params, f"{name}.lin.{a}", "linear", cfg, rng, dtype)
            for a in range(n_lin)
        ]
        self.nonlinear = [
            _LgmTransform(params, f"{name}.non.{b}", "nonlinear", cfg, rng, dtype)
            for b in range(n_non)
        ]
        self.nlout = (
            _ChannelMap(params, f"{name}.nlout", cfg.d_m, cfg.d_m, rng, dtype)
            if self.nonlinear
            else None
        )

    def __call__(self, c: Node) -> Node:
        total: Node | None = None
        for t in self.linear:
            out = t(c)
            total = out if total is None else ad.add(total, out)
        if self.nonlinear:
            nsum: Node | None = None
            for t in self.nonlinear:
                out = t(c)
                nsum = out if nsum is None else ad.add(nsum, out)
            mapped = self.nlout(nsum)
            total = mapped if total is None else ad.add(total, mapped)
        return total


class LgmOperator:
    """Lift/project sandwich around a dynamics-style stack of mixing layers."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, precision: str = "f64"):
        config.validate()
        self.config = config
        if precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {precision!r}")
        self.precision = precision
        self.dtype = np.float32 if precision == "f32" else np.float64
        p: dict[str, Parameter] = {}
        cfg = config
        self.lift = _ChannelMap(p, "lift", cfg.in_channels, cfg.d_v, rng, self.dtype)
        self.proj = _ChannelMap(p, "proj", cfg.d_v, cfg.d_m, rng, self.dtype)
        self.layers = [
            _LgmLayer(p, f"layers.{l}", cfg, rng, self.dtype) for l in range(cfg.depth)
        ]
        self.dt = []
        for l in range(cfg.depth):
            par = Parameter(
                f"layers.{l}.dt", np.asarray(1.0 / cfg.depth, dtype=self.dtype)
            )
            p[par.name] = par
            self.dt.append(par)
        self.unproj = _ChannelMap(p, "unproj", cfg.d_m, cfg.d_v, rng, self.dtype)
        self.unlift = _ChannelMap(p, "unlift", cfg.d_v, cfg.out_channels, rng, self.dtype)
        self.params = p

    # -- parameter plumbing --------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def parameter_count(self) -> int:
        """Total trainable reals.

        Channel maps contribute d_out*d_in + d_out; each spectral weight
        tensor contributes 2 * prod(stored mode extents) * channels^2 reals
        (or 2 * prod(modes) * channels when diagonal); each layer adds one
        dt scalar.
        """
        total = 0
        for p in self.params.values():
            total += p.value.size * (2 if np.iscomplexobj(p.value) else 1)
        return total

    # -- geometry checks -----------------------------------------------------

    def validate_spatial(self, spatial: tuple[int, ...]) -> None:
        cfg = self.config
        if len(spatial) != cfg.spatial_ndim:
            raise ValueError(
                f"model is {cfg.spatial_ndim}D, input has {len(spatial)} spatial axes"
            )
        for n, k in zip(spatial, cfg.modes):
            if not fourier.is_power_of_two(n):
                raise ValueError(f"spatial extent {n} is not a power of two")
            if n < 2 * k:
                raise ValueError(
                    f"resolution {n} too small for {k} retained modes (need >= {2 * k})"
                )

    # -- forward passes ------------------------------------------------------

    def _stack(self, c0: Node) -> Node:
        cfg = self.config
        if cfg.variant == "parallel-only":
            total = c0
            for layer, dt in zip(self.layers, self.dt):
                total = ad.add(total, ad.scalar_scale(layer(c0), ad.param_node(dt)))
        elif cfg.variant == "hierarchical-only":
            state = c0
            for l, layer in enumerate(self.layers):
                f = layer(state)
                state = ad.add(state, f)
                if l < cfg.depth - 1:
                    state = ad.activation(state, cfg.activation)
            total = state
        else:
            state = c0
            total = c0
            for l, (layer, dt) in enumerate(zip(self.layers, self.dt)):
                f = layer(state)
                total = ad.add(total, ad.scalar_scale(f, ad.param_node(dt)))
                if l < cfg.depth - 1:
                    state = ad.activation(ad.add(state, f), cfg.activation)
        if cfg.final_activation:
            total = ad.activation(total, cfg.activation)
        return total

    def forward_nodes(self, window: np.ndarray) -> tuple[Node, Node]:
        """Build the graph for a batched window; returns (prediction, reconstruction).

        window: (batch, d_u*(history+1), *spatial). The prediction is the
        next frame (d_u channels); the reconstruction is the lift/project
        sandwich without the dynamics stack.
        """
        cfg = self.config
        if window.ndim != 2 + cfg.spatial_ndim:
            raise ValueError(
                f"window rank {window.ndim} does not match batched {cfg.spatial_ndim}D layout"
            )
        if window.shape[1] != cfg.in_channels:
            raise ValueError(
                f"window has {window.shape[1]} channels, model expects {cfg.in_channels}"
            )
        self.validate_spatial(window.shape[2:])
        x = ad.constant(np.ascontiguousarray(window, dtype=self.dtype))
        c0 = self.proj(self.lift(x))
        recon = self.unlift(self.unproj(c0))
        evolved = self.unlift(self.unproj(self._stack(c0)))
        if cfg.out_channels != cfg.d_u:
            pred = ad.slice_channels(
                evolved, cfg.out_channels - cfg.d_u, cfg.out_channels
            )
        else:
            pred = evolved
        return pred, recon

    def _as_batched(self, window: np.ndarray) -> tuple[np.ndarray, bool]:
        want = 2 + self.config.spatial_ndim
        if window.ndim == want - 1:
            return window[None], True
        return window, False

    def model_forward(self, window: np.ndarray) -> np.ndarray:
        """Predict the next frame; accepts a single window or a batch."""
        batch, squeeze = self._as_batched(window)
        pred, _ = self.forward_nodes(batch)
        return pred.value[0] if squeeze else pred.value

    def consistency_forward(self, window: np.ndarray) -> np.ndarray:
        """The lift/project sandwich without dynamics (input reconstruction)."""
        batch, squeeze = self._as_batched(window)
        _, recon = self.forward_nodes(batch)
        return recon.value[0] if squeeze else recon.value


def build_model(config: ModelConfig, seed: int, precision: str = "f64") -> LgmOperator:
    """Construct a model with the canonical seed derivation for init draws."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    return LgmOperator(config, rng, precision=precision)
