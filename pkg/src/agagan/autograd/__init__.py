"""Minimal reverse-mode differentiable tensor engine."""

from . import functional
from .gradcheck import gradcheck
from .optim import ParamStore, adam_step, glorot_uniform, he_uniform
from .tensor import DTYPE, ConfigurationError, Tensor, UsageError, as_tensor, is_grad_enabled, no_grad, precision

__all__ = [
    "DTYPE",
    "ConfigurationError",
    "ParamStore",
    "Tensor",
    "UsageError",
    "adam_step",
    "as_tensor",
    "functional",
    "glorot_uniform",
    "gradcheck",
    "he_uniform",
    "is_grad_enabled",
    "no_grad",
    "precision",
]
