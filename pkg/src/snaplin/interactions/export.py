"""Per-cell operator export for downstream embedding and coloring."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..data.dataset import SnapshotDataset
from ..data.pca import PcaBasis, project
from ..encoder.network import predict_many
from ..encoder.params import EncoderParams
from ..linop import assemble_many
from ..logger import get_logger
from .weights import SeedLike, resolve_genes, sample_cells

log = get_logger(__name__)


def operator_columns(d_z: int) -> list[str]:
    return [f"a_{i}_{j}" for i in range(d_z) for j in range(d_z)]


def export_operators(
    params: EncoderParams,
    basis: PcaBasis,
    dataset: SnapshotDataset,
    n_cells: int,
    path: Path,
    seed: SeedLike = 0,
    markers: Sequence[str] = (),
    idx: Optional[int] = None,
) -> Path:
    """
    Write one row per sampled cell: ``time``, the row-major assembled operator
    and the raw expression of each marker gene.
    """
    names = dataset.genes()
    marker_idx = resolve_genes(names, list(markers)) if markers else np.zeros(0, dtype=np.int64)
    rows = sample_cells(dataset.n_samples, n_cells, seed)
    X = dataset.X[rows]
    times = dataset.times[rows]
    P, lam = predict_many(params, project(basis, X), times, idx)
    A = assemble_many(P, lam)

    d = basis.d_z
    frame = pd.DataFrame(A.reshape(rows.size, d * d), columns=operator_columns(d))
    frame.insert(0, "time", times)
    for name, j in zip(markers, marker_idx):
        frame[name] = X[:, j]

    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    log.info("operators_exported", path=str(path), cells=int(rows.size), markers=len(marker_idx))
    return path
