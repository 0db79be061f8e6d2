"""
Optimal-transport primitives: exact EMD and Sinkhorn couplings.

Ground cost is the Euclidean distance between latent coordinates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import ot
from scipy.spatial.distance import cdist

from ..errors import TransportError
from ..logger import get_logger

log = get_logger(__name__)

EMD_MAX_ITER = 1_000_000


def cost_matrix(xs: np.ndarray, ys: np.ndarray, n_threads: int = 1, block: int = 1024) -> np.ndarray:
    """Euclidean cost matrix, optionally assembled by row blocks on a thread pool."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if n_threads <= 1 or xs.shape[0] <= block:
        return cdist(xs, ys, metric="euclidean")
    out = np.empty((xs.shape[0], ys.shape[0]))
    starts = list(range(0, xs.shape[0], block))

    def fill(start: int) -> None:
        stop = min(start + block, xs.shape[0])
        out[start:stop] = cdist(xs[start:stop], ys, metric="euclidean")

    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        list(pool.map(fill, starts))
    return out


def _weights(points: np.ndarray, weights: Optional[np.ndarray], side: str) -> np.ndarray:
    if points.ndim != 2 or points.shape[0] == 0:
        raise TransportError(f"{side} point cloud is empty or not 2-D (shape {points.shape})")
    if weights is None:
        return np.full(points.shape[0], 1.0 / points.shape[0])
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != points.shape[0]:
        raise TransportError(f"{side} weights have length {w.shape[0]} for {points.shape[0]} points")
    if np.any(w < 0):
        raise TransportError(f"{side} weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise TransportError(f"{side} weights carry zero mass")
    return w / total


def emd_exact(
    xs: np.ndarray,
    ys: np.ndarray,
    x_weights: Optional[np.ndarray] = None,
    y_weights: Optional[np.ndarray] = None,
    n_threads: int = 1,
) -> float:
    """
    Exact 1-Wasserstein distance by network simplex.

    Weights default to uniform and are normalized to unit mass.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    a = _weights(xs, x_weights, "source")
    b = _weights(ys, y_weights, "target")
    M = cost_matrix(xs, ys, n_threads)
    return float(ot.emd2(a, b, M, numItermax=EMD_MAX_ITER))


def emd_plan(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Exact optimal coupling between two uniformly weighted clouds."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    a = _weights(xs, None, "source")
    b = _weights(ys, None, "target")
    return ot.emd(a, b, cost_matrix(xs, ys), numItermax=EMD_MAX_ITER)


@dataclass(eq=False)
class SinkhornResult:
    coupling: np.ndarray
    cost: float
    marginal_error: float
    iterations: int
    converged: bool


def sinkhorn_coupling(
    xs: np.ndarray,
    ys: np.ndarray,
    reg: float,
    max_iter: int = 10_000,
    tol: float = 1e-9,
) -> SinkhornResult:
    """
    Entropic coupling between uniform clouds (log-domain Sinkhorn).

    Non-convergence is reported through ``converged`` and the achieved L1
    marginal error, never raised.
    """
    if reg <= 0:
        raise TransportError(f"Sinkhorn regularization must be positive, got {reg}")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    a = _weights(xs, None, "source")
    b = _weights(ys, None, "target")
    M = cost_matrix(xs, ys)
    coupling, info = ot.sinkhorn(
        a, b, M, reg, method="sinkhorn_log", numItermax=max_iter, stopThr=tol, log=True, warn=False
    )
    row_error = float(np.abs(coupling.sum(axis=1) - a).sum())
    col_error = float(np.abs(coupling.sum(axis=0) - b).sum())
    error = max(row_error, col_error)
    iterations = int(info.get("niter", max_iter))
    converged = error <= tol
    if not converged:
        log.warning("sinkhorn_not_converged", marginal_error=error, tol=tol, iterations=iterations, reg=reg)
    return SinkhornResult(
        coupling=coupling,
        cost=float(np.sum(coupling * M)),
        marginal_error=error,
        iterations=iterations,
        converged=converged,
    )
