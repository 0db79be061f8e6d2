"""
Training objective: discounted marginal matching plus kinetic and
invertibility regularizers.

A :class:`BatchSpec` carries one step's draws in latent coordinates. For every
selected source time the encoder predicts one operator per source sample and
the batch is pushed in closed form to every later usable time ``t'``; the
pushed batch is compared with a fresh batch of the marginal at ``t'`` and the
discrepancy is weighted by ``gamma ** t'`` (or ``gamma ** (t' - t)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config import LossConfig
from ..data.sampling import BatchSampler
from ..diffcore import Value, ops
from ..encoder.network import BoundEncoder
from ..errors import GridError
from ..linop import Propagator
from .kernels import mmd2


@dataclass(frozen=True, eq=False)
class BatchSpec:
    """Latent draws for one optimization step of one dataset."""

    times: Tuple[float, ...]
    sources: Mapping[float, np.ndarray]
    targets: Mapping[float, np.ndarray]
    source_times: Tuple[float, ...]
    dataset_index: Optional[int] = None


@dataclass
class PushedBatch:
    z: Value
    t: float


@dataclass
class LossBreakdown:
    total: Value
    mmd: Value
    kinetic: Value
    invertibility: Value
    det_P: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def components(self) -> Dict[str, float]:
        return {
            "total": float(self.total.data),
            "mmd": float(self.mmd.data),
            "kinetic": float(self.kinetic.data),
            "invertibility": float(self.invertibility.data),
        }

    def det_stats(self) -> Dict[str, float]:
        if self.det_P.size == 0:
            return {}
        magnitude = np.abs(self.det_P)
        return {
            "min_abs": float(magnitude.min()),
            "max_abs": float(magnitude.max()),
            "mean": float(self.det_P.mean()),
        }


def usable_sources(times: Sequence[float], include_self_term: bool = True) -> Tuple[float, ...]:
    """
    Times that have at least one target at or after them.

    Without the self term the last time has no target and is dropped.
    """
    ordered = tuple(sorted(times))
    if len(ordered) < 2:
        raise GridError(f"marginal matching needs at least 2 usable times, got {list(ordered)}")
    return ordered if include_self_term else ordered[:-1]


def draw_batch_spec(
    sampler: BatchSampler,
    batch_size: int,
    cfg: LossConfig,
    dataset_index: Optional[int] = None,
) -> BatchSpec:
    """
    Draw source and target batches for every usable time of ``sampler``.

    With ``cfg.sources_per_step`` set, that many sources are picked uniformly
    without replacement; otherwise all usable sources contribute.
    """
    times = tuple(sampler.times)
    candidates = usable_sources(times, cfg.include_self_term)
    if cfg.sources_per_step is not None and cfg.sources_per_step < len(candidates):
        picked = sampler.rng.choice(len(candidates), size=cfg.sources_per_step, replace=False)
        chosen = tuple(candidates[i] for i in sorted(picked))
    else:
        chosen = candidates
    sources = {t: sampler.draw(t, batch_size) for t in chosen}
    targets = {t: sampler.draw(t, batch_size) for t in times}
    return BatchSpec(
        times=times, sources=sources, targets=targets, source_times=chosen, dataset_index=dataset_index
    )


def discount(cfg: LossConfig, source_t: float, target_t: float) -> float:
    exponent = target_t if cfg.discount == "absolute" else target_t - source_t
    # Python evaluates 0.0 ** 0 as 1.0.
    return float(cfg.gamma**exponent)


def _encode(encoder: BoundEncoder, z: Value, t: float, idx: Optional[int]) -> Tuple[Value, Value]:
    return encoder(z, np.full(z.shape[0], t), idx)


def marginal_matching_loss(
    encoder: BoundEncoder, spec: BatchSpec, cfg: LossConfig
) -> Tuple[Value, List[PushedBatch], List[Value]]:
    """
    Mean over selected sources of the discounted MMD to every later marginal.

    Returns the loss, the pushed latent batches (for the kinetic term) and the
    predicted bases ``P`` of every operator used (for the invertibility term).
    With ``cfg.relinearize_every = k`` the pushed batch is re-encoded at each
    k-th later grid time and the flow continues from there.
    """
    pushed: List[PushedBatch] = []
    bases: List[Value] = []
    per_source: List[Value] = []
    stride = cfg.relinearize_every
    for source_t in spec.source_times:
        z_src = Value(spec.sources[source_t])
        P, lam = _encode(encoder, z_src, source_t, spec.dataset_index)
        bases.append(P)
        flow, anchor_t, hops = Propagator(P, lam, z_src), source_t, 0
        restart: Optional[PushedBatch] = None
        terms: List[Value] = []
        for target_t in spec.times:
            if target_t < source_t:
                continue
            weight = discount(cfg, source_t, target_t)
            if target_t == source_t and not cfg.include_self_term:
                weight = 0.0
            if weight == 0.0 and not stride:
                continue
            if restart is not None:
                # Re-encoded only when a later target needs the new operator.
                P, lam = _encode(encoder, restart.z, restart.t, spec.dataset_index)
                bases.append(P)
                flow, anchor_t, restart = Propagator(P, lam, restart.z), restart.t, None
            z_pred = flow.at(target_t - anchor_t)
            if weight != 0.0:
                pushed.append(PushedBatch(z=z_pred, t=target_t))
                term = mmd2(z_pred, Value(spec.targets[target_t]), cfg.sigma, cfg.eps_kernel, cfg.unbiased_mmd)
                terms.append(ops.scale(term, weight))
            if target_t > source_t:
                hops += 1
                if stride and hops % stride == 0:
                    restart = PushedBatch(z=z_pred, t=target_t)
        per_source.append(_sum_values(terms))
    return ops.scale(_sum_values(per_source), 1.0 / len(per_source)), pushed, bases


def _sum_values(values: Sequence[Value]) -> Value:
    if not values:
        return Value(0.0)
    total = values[0]
    for value in values[1:]:
        total = ops.add(total, value)
    return total


def kinetic_loss(
    encoder: BoundEncoder, pushed: Sequence[PushedBatch], dataset_index: Optional[int] = None
) -> Value:
    """Mean ``||A(z, t) z||^2`` over all pushed states, each re-encoded at its own time."""
    if not pushed:
        return Value(0.0)
    count = 0
    sums: List[Value] = []
    for batch in pushed:
        P, lam = _encode(encoder, batch.z, batch.t, dataset_index)
        velocity = Propagator(P, lam, batch.z).velocity()
        sums.append(ops.sum(ops.sq_norm(velocity, axis=-1)))
        count += batch.z.shape[0]
    return ops.scale(_sum_values(sums), 1.0 / count)


def invertibility_loss(bases: Sequence[Value], eps_inv: float = 1e-8, signed: bool = False) -> Value:
    """
    Mean ``1 / (|det P| + eps_inv)`` over every predicted basis.

    ``signed`` uses ``det P`` as is, which is unbounded below as ``det P``
    approaches ``-eps_inv``.
    """
    if not bases:
        return Value(0.0)
    dets = bases[0] if len(bases) == 1 else ops.concat(list(bases), axis=0)
    det = ops.det(dets)
    magnitude = det if signed else ops.absolute(det)
    return ops.mean(ops.reciprocal(ops.shift(magnitude, eps_inv)))


def total_loss(encoder: BoundEncoder, spec: BatchSpec, cfg: LossConfig) -> LossBreakdown:
    """``L_mmd + lambda_kin * L_kin + lambda_inv * L_inv``; zero-weight terms are not evaluated."""
    matching, pushed, bases = marginal_matching_loss(encoder, spec, cfg)
    kinetic = kinetic_loss(encoder, pushed, spec.dataset_index) if cfg.lambda_kin > 0 else Value(0.0)
    invertibility = (
        invertibility_loss(bases, cfg.eps_inv, cfg.signed_det) if cfg.lambda_inv > 0 else Value(0.0)
    )
    total = matching
    if cfg.lambda_kin > 0:
        total = ops.add(total, ops.scale(kinetic, cfg.lambda_kin))
    if cfg.lambda_inv > 0:
        total = ops.add(total, ops.scale(invertibility, cfg.lambda_inv))
    det_P = np.concatenate([np.linalg.det(P.data) for P in bases]) if bases else np.zeros(0)
    return LossBreakdown(
        total=total, mmd=matching, kinetic=kinetic, invertibility=invertibility, det_P=det_P
    )
