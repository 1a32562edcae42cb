"""Local-global mixing neural operator for PDE surrogates.

Self-contained: dense channel algebra, a radix-2 spectral kernel, a
reverse-mode autodiff engine covering exactly the model's op set, the
operator network itself, AdamW training, and reference PDE solvers for
dataset generation. See the CLI (`lgmix --help`) for the end-to-end
workflow.
"""

from .autodiff import Node, Parameter, backward, grad_check
from .dataset import NormStats, TrajectoryDataset, build_windows, fit_norm_stats
from .model import LgmOperator, ModelConfig, build_model
from .solvers import TrajectorySpec, default_spec
from .spectral import SpectralWeights, spectral_multiply
from .training import AdamW, LossWeights, compute_loss, evaluate, rollout, train

__all__ = [
    "AdamW",
    "LgmOperator",
    "LossWeights",
    "ModelConfig",
    "Node",
    "NormStats",
    "Parameter",
    "SpectralWeights",
    "TrajectoryDataset",
    "TrajectorySpec",
    "backward",
    "build_model",
    "build_windows",
    "compute_loss",
    "default_spec",
    "evaluate",
    "fit_norm_stats",
    "grad_check",
    "rollout",
    "spectral_multiply",
    "train",
]

__version__ = "0.1.0"
