"""Flat key=value configuration with typed coercion and strict keys.

Config files hold one `key = value` per line with `#` comments. Every key
can also be set as a `--key value` command-line flag; flags override the
file. Unknown keys are rejected, every field has a default, and referenced
paths are checked at validation time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, asdict

from .solvers import TrajectorySpec, default_spec


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # model
    d_m: int = 32
    depth: int = 2
    n_linear: int = 1
    n_nonlinear: int = 1
    modes: int = 12
    modes2: int = 12  # second spatial axis (2D datasets only)
    history: int = 0
    activation: str = "gelu"
    final_activation: bool = False
    spectral_diag: bool = False
    consistency_target: str = "window"
    ablation: str = "full"
    # training
    lr: float = 1e-3
    epochs: int = 100
    batch: int = 16
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 0.97
    step_size: int = 6
    weight_decay: float = 1e-4
    seed: int = 0
    precision: str = "f32"
    metric: str = "mse"
    metric_denormalized: bool = False
    # io / run plumbing
    data: str = ""
    out: str = ""
    log: str = ""
    resume: str = ""
    checkpoint: str = ""
    threads: int = 1
    split: str = "test"
    steps: int = 10
    grid: int = 16  # synthetic grid extent for gradcheck
    tolerance: float = 1e-4  # gradcheck pass threshold
    variants: str = ("full,local-only,global-only,linear-only,nonlinear-only,"
                     "parallel-only,hierarchical-only")

    def validate(self, need_data: bool = False) -> None:
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.metric not in ("mse", "relative_mse"):
            raise ConfigError(f"metric must be mse or relative_mse, got {self.metric!r}")
        if self.epochs < 0 or self.batch < 1 or self.threads < 1:
            raise ConfigError("epochs >= 0, batch >= 1, threads >= 1 required")
        if self.lr <= 0 or self.gamma <= 0 or self.step_size < 1:
            raise ConfigError("lr > 0, gamma > 0, step_size >= 1 required")
        if need_data:
            if not self.data:
                raise ConfigError("a dataset path is required (key: data)")
            if not os.path.exists(self.data):
                raise ConfigError(f"dataset file not found: {self.data}")
        if self.resume and not os.path.exists(self.resume):
            raise ConfigError(f"resume checkpoint not found: {self.resume}")
        if self.checkpoint and not os.path.exists(self.checkpoint):
            raise ConfigError(f"checkpoint not found: {self.checkpoint}")

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(name: str, text: str, target_type: type):
    text = text.strip()
    if target_type is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"key {name!r}: expected a boolean, got {text!r}")
    try:
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"key {name!r}: expected {target_type.__name__}, got {text!r}") from None
    return text


def parse_flat_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    pairs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs


def apply_pairs(instance, pairs: dict[str, str]):
    """Set typed fields from string pairs, rejecting unknown keys."""
    by_name = {f.name: f for f in fields(instance)}
    for key, text in pairs.items():
        if key not in by_name:
            known = ", ".join(sorted(by_name))
            raise ConfigError(f"unknown key {key!r} (known keys: {known})")
        ftype = type(getattr(instance, key))
        setattr(instance, key, _coerce(key, text, ftype))
    return instance


def load_run_config(config_path: str | None, overrides: dict[str, str]) -> RunConfig:
    cfg = RunConfig()
    if config_path:
        apply_pairs(cfg, parse_flat_file(config_path))
    apply_pairs(cfg, overrides)
    return cfg


def load_traj_spec(config_path: str | None, overrides: dict[str, str]) -> TrajectorySpec:
    """Generation spec: the pde key picks the defaults, then overrides apply."""
    pairs: dict[str, str] = {}
    if config_path:
        pairs.update(parse_flat_file(config_path))
    pairs.update(overrides)
    pde = pairs.pop("pde", None)
    if pde is None:
        raise ConfigError("dataset generation requires a pde key (ks1d | burgers1d | darcy2d)")
    spec = default_spec(pde)
    apply_pairs(spec, pairs)
    spec.validate()
    return spec
