"""
Minimal reverse-mode differentiation over float64 numpy arrays.

Only the ops the training objective decomposes into are provided; see
``snaplin.diffcore.ops`` for the closed set.
"""

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .value import Node, Value, as_value, backward, forward_eval, zero_grad

__all__ = [
    "GradCheckReport",
    "Node",
    "Value",
    "as_value",
    "backward",
    "forward_eval",
    "grad_check",
    "ops",
    "zero_grad",
]
