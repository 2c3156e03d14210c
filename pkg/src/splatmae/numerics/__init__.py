"""Tensor engine, layers, optimizer and checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import grad_check, grad_check_parameters
from .nn import (
    Dropout,
    DropPath,
    LayerNorm,
    Linear,
    Module,
    ModuleDict,
    ModuleList,
    MultiHeadAttention,
    Parameter,
    PointwiseMLP,
    TransformerBlock,
    TransformerStack,
)
from .optim import AdamW, OptimizerState, cosine_schedule
from .tensor import Tensor, concat, gather_rows, matmul, no_grad, stack

__all__ = [
    "AdamW",
    "Checkpoint",
    "DropPath",
    "Dropout",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleDict",
    "ModuleList",
    "MultiHeadAttention",
    "OptimizerState",
    "Parameter",
    "PointwiseMLP",
    "Tensor",
    "TransformerBlock",
    "TransformerStack",
    "concat",
    "cosine_schedule",
    "gather_rows",
    "grad_check",
    "grad_check_parameters",
    "load_checkpoint",
    "matmul",
    "no_grad",
    "save_checkpoint",
    "stack",
]
