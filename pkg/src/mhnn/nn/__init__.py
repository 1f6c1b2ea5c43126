from . import functional
from .checkpoint import dumps_checkpoint, load_into, read_checkpoint, save_checkpoint
from .gradcheck import gradient_check, relative_error
from .layers import MLP, Conv1DBlock, ConvStack, Linear, Module, ResidualConvStack
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor, backward, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "Conv1DBlock",
    "ConvStack",
    "Linear",
    "MLP",
    "Module",
    "ResidualConvStack",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "dumps_checkpoint",
    "functional",
    "gradient_check",
    "no_grad",
    "load_into",
    "read_checkpoint",
    "relative_error",
    "save_checkpoint",
]
