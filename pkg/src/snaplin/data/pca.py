"""
Linear projection between observation space and the latent space.

The default basis is uncentered so that ``z = V^T x`` holds exactly and the
back-projected operator ``V A V^T`` acts on raw observations. Centered bases
store the mean and shift before projecting.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from ..errors import DatasetParseError, DimensionMismatchError
from ..logger import get_logger

log = get_logger(__name__)

ORTHONORMAL_TOL = 1e-8
_HEADER_PREFIX = "# snaplin-pca"


@dataclass(frozen=True, eq=False)
class PcaBasis:
    """Orthonormal columns ``V`` (d_x x d_z), optionally with a centering mean."""

    V: np.ndarray
    centered: bool = False
    mean: Optional[np.ndarray] = None
    gene_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        V = np.array(self.V, dtype=np.float64)
        if V.ndim != 2 or V.shape[1] > V.shape[0]:
            raise DimensionMismatchError(f"basis must be d_x x d_z with d_z <= d_x, got {V.shape}")
        gram_error = np.linalg.norm(V.T @ V - np.eye(V.shape[1]))
        if gram_error > ORTHONORMAL_TOL:
            raise DimensionMismatchError(f"basis columns are not orthonormal (error {gram_error:.2e})")
        mean = None
        if self.centered:
            if self.mean is None:
                raise DimensionMismatchError("centered basis requires a mean vector")
            mean = np.array(self.mean, dtype=np.float64).reshape(-1)
            if mean.shape[0] != V.shape[0]:
                raise DimensionMismatchError(f"mean has length {mean.shape[0]}, expected {V.shape[0]}")
        if self.gene_names is not None and len(self.gene_names) != V.shape[0]:
            raise DimensionMismatchError(
                f"{len(self.gene_names)} gene names for a basis with {V.shape[0]} rows"
            )
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "mean", mean)

    @property
    def d_x(self) -> int:
        return int(self.V.shape[0])

    @property
    def d_z(self) -> int:
        return int(self.V.shape[1])


def fit_pca(
    X: np.ndarray,
    d_z: int = 5,
    centered: bool = False,
    gene_names: Optional[Tuple[str, ...]] = None,
) -> PcaBasis:
    """
    Top ``d_z`` right singular directions of ``X`` (or of ``X`` minus its row mean).

    Each column is signed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d_x = X.shape
    if d_z < 1 or d_z > min(n, d_x):
        raise DimensionMismatchError(f"d_z={d_z} must be between 1 and min(N, d_x)={min(n, d_x)}")
    mean = X.mean(axis=0) if centered else None
    data = X - mean if mean is not None else X
    _, singular, vt = linalg.svd(data, full_matrices=False, lapack_driver="gesdd")
    V = vt[:d_z].T.copy()
    pivots = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivots, np.arange(d_z)])
    signs[signs == 0] = 1.0
    V *= signs[None, :]
    explained = float(np.sum(singular[:d_z] ** 2) / max(np.sum(singular**2), 1e-300))
    log.info("pca_fitted", d_x=d_x, d_z=d_z, centered=centered, explained=explained)
    return PcaBasis(V=V, centered=centered, mean=mean, gene_names=gene_names)


def project(basis: PcaBasis, x: np.ndarray) -> np.ndarray:
    """Latent coordinates ``V^T (x - mean)``; accepts a vector or rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != basis.d_x:
        raise DimensionMismatchError(f"observation width {x.shape[-1]} != basis d_x {basis.d_x}")
    if basis.mean is not None:
        x = x - basis.mean
    return x @ basis.V


def backproject(basis: PcaBasis, z: np.ndarray) -> np.ndarray:
    """Observation-space reconstruction ``V z + mean``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != basis.d_z:
        raise DimensionMismatchError(f"latent width {z.shape[-1]} != basis d_z {basis.d_z}")
    x = z @ basis.V.T
    if basis.mean is not None:
        x = x + basis.mean
    return x


def save_basis(basis: PcaBasis, path: Path) -> Path:
    """
    Write one row per gene: name, the ``d_z`` loadings and, when centered, the mean.

    The first line is a metadata comment carrying the centered flag.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    names = basis.gene_names or tuple(f"g{j}" for j in range(basis.d_x))
    frame = pd.DataFrame(basis.V, columns=[f"pc{k + 1}" for k in range(basis.d_z)])
    frame.insert(0, "gene", list(names))
    if basis.mean is not None:
        frame["mean"] = basis.mean
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"{_HEADER_PREFIX} centered={int(basis.centered)} d_z={basis.d_z}\n")
        frame.to_csv(handle, index=False)
    return path


def load_basis(path: Path) -> PcaBasis:
    with path.open("r", encoding="utf-8") as handle:
        header = handle.readline().strip()
    if not header.startswith(_HEADER_PREFIX):
        raise DatasetParseError("missing PCA metadata header", row=1)
    meta = dict(item.split("=", 1) for item in header[len(_HEADER_PREFIX):].split())
    centered = meta.get("centered", "0") == "1"
    frame = pd.read_csv(path, skiprows=1, float_precision="round_trip")
    loadings = [column for column in frame.columns if column.startswith("pc")]
    if not loadings:
        raise DatasetParseError("PCA file has no loading columns", row=2)
    mean = frame["mean"].to_numpy(dtype=np.float64) if centered else None
    return PcaBasis(
        V=frame[loadings].to_numpy(dtype=np.float64),
        centered=centered,
        mean=mean,
        gene_names=tuple(str(name) for name in frame["gene"]),
    )
