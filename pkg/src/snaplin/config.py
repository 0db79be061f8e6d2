"""
Hyperparameter models.

Defaults: Laplacian kernel with
sigma=1 and eps=1e-8, future discount 0.1, kinetic weight 0.1, invertibility
weight 1, a depth-4 width-96 leaky-ReLU MLP with last layer scaled by 0.01,
AdamW at lr 2e-4 and weight decay 1e-5, 200 samples per time point,
validation every 10 steps with patience 40, and a 200-minute budget.
"""

from __future__ import annotations

import hashlib
import json
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class LossConfig(BaseModel):
    """Objective weights and kernel parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(1.0, gt=0.0)
    eps_kernel: float = Field(1e-8, ge=0.0)
    gamma: float = Field(0.1, ge=0.0, le=1.0)
    lambda_kin: float = Field(0.1, ge=0.0)
    lambda_inv: float = Field(1.0, ge=0.0)
    eps_inv: float = Field(1e-8, ge=0.0)
    include_self_term: bool = True
    discount: Literal["absolute", "lag"] = "absolute"
    unbiased_mmd: bool = False
    signed_det: bool = False
    sources_per_step: Optional[int] = Field(None, ge=1)
    gram_block_size: int = Field(1024, ge=1)
    # Re-encode pushed batches after every k later grid times; 0 keeps one operator per source.
    relinearize_every: int = Field(0, ge=0)


class EncoderConfig(BaseModel):
    """Shape of the operator-predicting MLP."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    depth: int = Field(4, ge=1)
    width: int = Field(96, ge=1)
    zero_mask: Tuple[int, ...] = ()
    out_scale: float = Field(0.01, gt=0.0)
    negative_slope: float = Field(0.01, ge=0.0)
    normalize_time: bool = False

    @field_validator("zero_mask")
    @classmethod
    def _sorted_unique(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(index < 0 for index in value):
            raise ValueError("zero_mask indices must be non-negative")
        return tuple(sorted(set(value)))


class TrainConfig(BaseModel):
    """Optimization loop settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(2e-4, ge=0.0)
    weight_decay: float = Field(1e-5, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0.0)
    batch_per_time: int = Field(200, ge=1)
    max_steps: int = Field(100_000, ge=0)
    val_every: int = Field(10, ge=1)
    patience: int = Field(40, ge=1)
    max_minutes: float = Field(200.0, gt=0.0)
    seed: int = 0
    clip_grad_norm: Optional[float] = Field(None, gt=0.0)
    heldout_time: Optional[float] = None
    # Dataset files for amortized training when none are passed explicitly.
    amortized: List[str] = Field(default_factory=list)
    loss: LossConfig = Field(default_factory=LossConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)

    def config_hash(self) -> str:
        """Stable digest of the resolved configuration."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class EvalConfig(BaseModel):
    """Held-out evaluation protocol."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Literal["emd", "mmd"] = "emd"
    source: Literal["previous", "initial"] = "previous"
    push_chunk: int = Field(8192, ge=1)
    mmd_batch_size: Optional[int] = Field(None, ge=2)
    exact_ot_limit: int = Field(2000, ge=1)
    sinkhorn_reg_scale: float = Field(0.05, gt=0.0)
    sinkhorn_max_iter: int = Field(10_000, ge=1)
    sinkhorn_tol: float = Field(1e-9, gt=0.0)


class InteractionConfig(BaseModel):
    """Interaction aggregation and edge classification."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_cells: int = Field(10_000, ge=1)
    min_edges: int = Field(10, ge=0)
    top_sources: int = Field(10, ge=1)
    signed_activity: bool = False
    chunk_size: int = Field(512, ge=1)
