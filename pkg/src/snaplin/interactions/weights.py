"""
Observation-space interaction weights.

The latent operator ``A`` at a cell is lifted to ``W = V A V^T``; the weight
of gene ``j`` on gene ``i`` is ``w_{j->i} = W[i, j] * x_j``. Arrays returned
here are indexed ``[target i, source j]``. Only the rows of ``V`` belonging to
the requested genes are used, so a gene subset never costs ``d_x^2``.

With a centered basis the dynamics act on ``x - mean`` and the multiplicative
factor becomes ``x_j - mean_j``.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..data.dataset import SnapshotDataset
from ..data.pca import PcaBasis, project
from ..encoder.network import predict_many
from ..encoder.params import EncoderParams
from ..errors import DimensionMismatchError, GeneNotFoundError
from ..linop import assemble_many
from ..logger import get_logger

log = get_logger(__name__)

SeedLike = Union[int, np.random.SeedSequence]


def resolve_genes(gene_names: Sequence[str], requested: Optional[Sequence[str]]) -> np.ndarray:
    """Column indices of ``requested`` genes (all genes when None)."""
    if requested is None:
        return np.arange(len(gene_names))
    lookup = {name: j for j, name in enumerate(gene_names)}
    indices = []
    for gene in requested:
        if gene not in lookup:
            raise GeneNotFoundError(gene, difflib.get_close_matches(gene, list(gene_names), n=3, cutoff=0.6))
        indices.append(lookup[gene])
    return np.asarray(indices, dtype=np.int64)


def _factor(basis: PcaBasis, x: np.ndarray, subset: np.ndarray) -> np.ndarray:
    values = x[..., subset]
    if basis.mean is not None:
        values = values - basis.mean[subset]
    return values


@dataclass(eq=False)
class InteractionMatrix:
    genes: Tuple[str, ...]
    weights: np.ndarray  # [target, source]


def interaction_weights(
    params: EncoderParams,
    basis: PcaBasis,
    x: np.ndarray,
    t: float,
    genes: Optional[Sequence[str]] = None,
    idx: Optional[int] = None,
    gene_names: Optional[Sequence[str]] = None,
) -> InteractionMatrix:
    """Weights ``w_{j->i}`` at a single cell for the requested gene subset."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != basis.d_x:
        raise DimensionMismatchError(f"cell has {x.shape[0]} genes, basis expects {basis.d_x}")
    names = tuple(gene_names or basis.gene_names or [f"g{j}" for j in range(basis.d_x)])
    subset = resolve_genes(names, genes)
    P, lam = predict_many(params, project(basis, x)[None, :], t, idx)
    A = assemble_many(P, lam)[0]
    V_s = basis.V[subset]
    W = V_s @ A @ V_s.T
    return InteractionMatrix(
        genes=tuple(names[j] for j in subset),
        weights=W * _factor(basis, x, subset)[None, :],
    )


@dataclass(eq=False)
class AggregatedWeights:
    """Mean weights over sampled cells, overall and per grid time."""

    genes: Tuple[str, ...]
    mean: np.ndarray
    per_time: Dict[float, np.ndarray] = field(default_factory=dict)
    counts: Dict[float, int] = field(default_factory=dict)
    n_cells: int = 0
    seed: Optional[int] = None

    def weight(self, source: str, target: str) -> float:
        return float(self.mean[self.genes.index(target), self.genes.index(source)])


def sample_cells(n_total: int, n_cells: int, seed: SeedLike) -> np.ndarray:
    """Sorted row indices; every row when ``n_cells >= n_total``, else uniform without replacement."""
    if n_cells < 1:
        raise ValueError(f"n_cells must be >= 1, got {n_cells}")
    if n_cells >= n_total:
        return np.arange(n_total)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_total, size=n_cells, replace=False))


def aggregate_weights(
    params: EncoderParams,
    basis: PcaBasis,
    dataset: SnapshotDataset,
    n_cells: int = 10_000,
    seed: SeedLike = 0,
    genes: Optional[Sequence[str]] = None,
    idx: Optional[int] = None,
    chunk_size: int = 512,
) -> AggregatedWeights:
    """
    Average ``w_{j->i}`` over sampled cells.

    The sum over cells is carried in latent form,
    ``M[a, c, j] = sum_cells A[a, c] * x_j``, and lifted once at the end as
    ``mean w[i, j] = sum_{a,c} V[i, a] M[a, c, j] V[j, c] / n``. Chunks are
    reduced in row order.
    """
    names = dataset.genes()
    subset = resolve_genes(names, genes)
    rows = sample_cells(dataset.n_samples, n_cells, seed)
    d, k = basis.d_z, subset.size
    V_s = basis.V[subset]

    sums: Dict[float, np.ndarray] = {}
    counts: Dict[float, int] = {}
    for start in range(0, rows.size, chunk_size):
        chunk = rows[start : start + chunk_size]
        X = dataset.X[chunk]
        times = dataset.times[chunk]
        P, lam = predict_many(params, project(basis, X), times, idx)
        A = assemble_many(P, lam)
        factor = _factor(basis, X, subset)
        for t in np.unique(times):
            mask = times == t
            key = float(t)
            partial = np.einsum("bac,bj->acj", A[mask], factor[mask])
            sums[key] = sums[key] + partial if key in sums else partial
            counts[key] = counts.get(key, 0) + int(mask.sum())

    def lift(M: np.ndarray, n: int) -> np.ndarray:
        return np.einsum("ia,acj,jc->ij", V_s, M, V_s) / n

    total = np.zeros((d, d, k))
    for t in sorted(sums):
        total = total + sums[t]
    aggregated = AggregatedWeights(
        genes=tuple(names[j] for j in subset),
        mean=lift(total, rows.size),
        per_time={t: lift(sums[t], counts[t]) for t in sorted(sums)},
        counts=dict(sorted(counts.items())),
        n_cells=int(rows.size),
        seed=seed if isinstance(seed, int) else None,
    )
    log.info("weights_aggregated", cells=aggregated.n_cells, genes=k, times=len(sums))
    return aggregated


@dataclass(eq=False)
class SourceRanking:
    per_time: Dict[float, List[Tuple[str, float]]]
    overall: List[Tuple[str, float]]

    def union(self) -> List[str]:
        """Genes appearing in any per-time top list, in first-seen order."""
        seen: Dict[str, None] = {}
        for t in sorted(self.per_time):
            for gene, _ in self.per_time[t]:
                seen.setdefault(gene, None)
        return list(seen)


def source_activity(weights: np.ndarray, signed: bool = False) -> np.ndarray:
    """``activity(j) = sum_i |w_{j->i}|`` (or the signed sum)."""
    return weights.sum(axis=0) if signed else np.abs(weights).sum(axis=0)


def _rank(genes: Sequence[str], activity: np.ndarray, k: int) -> List[Tuple[str, float]]:
    order = np.argsort(-activity, kind="stable")
    return [(genes[j], float(activity[j])) for j in order[:k]]


def top_source_genes(aggregated: AggregatedWeights, k: int = 10, signed: bool = False) -> SourceRanking:
    """Top-``k`` most active source genes per grid time and overall."""
    return SourceRanking(
        per_time={
            t: _rank(aggregated.genes, source_activity(w, signed), k) for t, w in aggregated.per_time.items()
        },
        overall=_rank(aggregated.genes, source_activity(aggregated.mean, signed), k),
    )
