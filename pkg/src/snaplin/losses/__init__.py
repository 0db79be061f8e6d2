"""Differentiable training objective."""

from .kernels import laplacian_gram, laplacian_kernel, mmd2, mmd2_streamed, pullback_mmd2
from .objective import (
    BatchSpec,
    LossBreakdown,
    PushedBatch,
    discount,
    draw_batch_spec,
    invertibility_loss,
    kinetic_loss,
    marginal_matching_loss,
    total_loss,
    usable_sources,
)

__all__ = [
    "BatchSpec",
    "LossBreakdown",
    "PushedBatch",
    "discount",
    "draw_batch_spec",
    "invertibility_loss",
    "kinetic_loss",
    "laplacian_gram",
    "laplacian_kernel",
    "marginal_matching_loss",
    "mmd2",
    "mmd2_streamed",
    "pullback_mmd2",
    "total_loss",
    "usable_sources",
]
