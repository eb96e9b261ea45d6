"""Minimal reverse-mode differentiation for fixed MLP pipelines."""

from . import dual, tensor
from .dual import Dual
from .mlp import ConfigError, MLPSpec, init_mlp, mlp_forward
from .optim import AdamState, NonFiniteGradient, adam_step, grad_check, lr_schedule
from .params import CheckpointError, ParamStore, read_tensors, write_tensors
from .tensor import ContractError, Tensor, as_tensor, backward

__all__ = [
    "AdamState", "CheckpointError", "ConfigError", "ContractError", "Dual", "MLPSpec",
    "NonFiniteGradient", "ParamStore", "Tensor", "adam_step", "as_tensor", "backward",
    "dual", "grad_check", "init_mlp", "lr_schedule", "mlp_forward", "read_tensors",
    "tensor", "write_tensors",
]
