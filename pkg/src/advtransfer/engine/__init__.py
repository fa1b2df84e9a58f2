from . import ops
from .optim import AdamState, adam_step
from .tensor import Tensor, get_dtype, precision, set_dtype

__all__ = ["Tensor", "ops", "AdamState", "adam_step", "get_dtype", "set_dtype", "precision"]
