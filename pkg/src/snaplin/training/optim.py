"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


@dataclass
class AdamWState:
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamWState":
        return cls(step=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adamw_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamWState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> Tuple[List[np.ndarray], AdamWState]:
    """
    One AdamW update.

    Decay shrinks the weights directly (``p -= lr * weight_decay * p``) and is
    kept out of the moment estimates. Inputs are not modified.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    if not state.m:
        state = AdamWState.zeros_like(params)
    beta1, beta2 = betas
    step = state.step + 1
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step

    new_params: List[np.ndarray] = []
    new_m: List[np.ndarray] = []
    new_v: List[np.ndarray] = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        update = (m / correction1) / (np.sqrt(v / correction2) + eps)
        new_params.append(p - lr * weight_decay * p - lr * update)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamWState(step=step, m=new_m, v=new_v)


def clip_by_global_norm(grads: Sequence[np.ndarray], max_norm: Optional[float]) -> Tuple[List[np.ndarray], float]:
    """Rescale gradients so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return list(grads), norm
    factor = max_norm / norm
    return [g * factor for g in grads], norm
