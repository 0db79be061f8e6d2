"""
Non-learned predictors of a held-out marginal.

Both work on latent coordinates when a basis is given and on raw
observations otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..data.dataset import SnapshotDataset
from ..data.pca import PcaBasis, project
from ..logger import get_logger
from .transport import cost_matrix, emd_plan, sinkhorn_coupling

log = get_logger(__name__)

SUPPORT_EPS = 1e-15


@dataclass(eq=False)
class WeightedCloud:
    points: np.ndarray
    weights: np.ndarray

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        picks = rng.choice(self.points.shape[0], size=n, replace=True, p=self.weights)
        return self.points[picks]


def _coords(dataset: SnapshotDataset, t: float, basis: Optional[PcaBasis]) -> np.ndarray:
    rows = dataset.marginal(t)
    return project(basis, rows) if basis is not None else rows


def interpolation_fraction(dataset: SnapshotDataset, heldout_t: float) -> Tuple[float, float, float]:
    """Neighbours of ``heldout_t`` and its fractional position between them."""
    t_prev, t_next = dataset.grid.neighbors(heldout_t)
    return t_prev, t_next, (heldout_t - t_prev) / (t_next - t_prev)


def ot_interpolate(
    prev: np.ndarray,
    nxt: np.ndarray,
    alpha: float,
    exact_limit: int = 2000,
    reg_scale: float = 0.05,
    n_samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    max_iter: int = 10_000,
    tol: float = 1e-9,
) -> Union[WeightedCloud, np.ndarray]:
    """
    Displacement interpolation ``(1 - alpha) x + alpha y`` along an optimal coupling.

    Clouds up to ``exact_limit`` points per side use the exact coupling;
    larger ones use Sinkhorn with ``reg = reg_scale * median cost``. Without
    ``n_samples`` the result is the weighted support of the coupling; with it,
    ``n_samples`` pairs are drawn in proportion to coupling mass.
    """
    if max(prev.shape[0], nxt.shape[0]) <= exact_limit:
        coupling = emd_plan(prev, nxt)
    else:
        reg = reg_scale * float(np.median(cost_matrix(prev, nxt)))
        coupling = sinkhorn_coupling(prev, nxt, reg=max(reg, 1e-12), max_iter=max_iter, tol=tol).coupling
        if n_samples is None:
            n_samples = nxt.shape[0]
    rows, cols = np.nonzero(coupling > SUPPORT_EPS)
    mass = coupling[rows, cols]
    cloud = WeightedCloud(
        points=(1.0 - alpha) * prev[rows] + alpha * nxt[cols],
        weights=mass / mass.sum(),
    )
    if n_samples is None:
        return cloud
    return cloud.sample(n_samples, rng if rng is not None else np.random.default_rng(0))


def ot_interpolate_baseline(
    dataset: SnapshotDataset,
    heldout_t: float,
    basis: Optional[PcaBasis] = None,
    exact_limit: int = 2000,
    reg_scale: float = 0.05,
    n_samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    max_iter: int = 10_000,
    tol: float = 1e-9,
) -> Union[WeightedCloud, np.ndarray]:
    """Prediction of the marginal at an interior ``heldout_t`` from its two neighbours."""
    t_prev, t_next, alpha = interpolation_fraction(dataset, heldout_t)
    log.debug("ot_interpolate", heldout=heldout_t, t_prev=t_prev, t_next=t_next, alpha=alpha)
    return ot_interpolate(
        _coords(dataset, t_prev, basis),
        _coords(dataset, t_next, basis),
        alpha,
        exact_limit=exact_limit,
        reg_scale=reg_scale,
        n_samples=n_samples,
        rng=rng,
        max_iter=max_iter,
        tol=tol,
    )


def persistence_baseline(
    dataset: SnapshotDataset, heldout_t: float, basis: Optional[PcaBasis] = None
) -> np.ndarray:
    """The preceding marginal, unchanged."""
    t_prev, _ = dataset.grid.neighbors(heldout_t)
    return _coords(dataset, t_prev, basis)
