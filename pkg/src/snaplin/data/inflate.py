"""Dataset inflation for the scaling protocol."""

from __future__ import annotations

from typing import Dict, Union

import numpy as np

from ..errors import DimensionMismatchError
from ..logger import get_logger
from .dataset import SnapshotDataset
from .pca import PcaBasis

log = get_logger(__name__)

DEFAULT_NOISE_SD = 0.1


def bucket_quotas(counts: Dict[float, int], target_n: int) -> Dict[float, int]:
    """
    Split ``target_n`` across time buckets in proportion to ``counts``.

    Largest-remainder rounding: quotas sum to ``target_n`` and each differs from
    its exact share by less than one.
    """
    total = sum(counts.values())
    times = sorted(counts)
    shares = np.array([target_n * counts[t] / total for t in times])
    quotas = np.floor(shares).astype(int)
    remainder = target_n - int(quotas.sum())
    # Stable sort keeps grid order among equal remainders.
    order = np.argsort(-(shares - quotas), kind="stable")
    quotas[order[:remainder]] += 1
    return {t: int(q) for t, q in zip(times, quotas)}


def inflate_dataset(
    dataset: SnapshotDataset,
    basis: PcaBasis,
    target_n: int,
    noise_sd: float = DEFAULT_NOISE_SD,
    seed: Union[int, np.random.SeedSequence] = 0,
) -> SnapshotDataset:
    """
    Grow ``dataset`` to exactly ``target_n`` rows.

    Every original row is kept once; each bucket is topped up to its quota by
    resampling with replacement. Gaussian noise of sd ``noise_sd`` is then added
    to the latent coordinates of every row, leaving the component orthogonal to
    the basis untouched.
    """
    if target_n < dataset.n_samples:
        raise DimensionMismatchError(
            f"target_n={target_n} is smaller than the dataset ({dataset.n_samples} rows)"
        )
    if basis.d_x != dataset.d_x:
        raise DimensionMismatchError(f"basis d_x {basis.d_x} != dataset d_x {dataset.d_x}")
    rng = np.random.default_rng(seed)
    quotas = bucket_quotas(dataset.counts(), target_n)

    index_blocks, labels = [], []
    for t in dataset.grid:
        rows = dataset.rows_at(t)
        extra = rng.integers(0, rows.size, size=quotas[t] - rows.size)
        index_blocks.append(np.concatenate([rows, rows[extra]]))
        labels.append(np.full(quotas[t], t))
    index = np.concatenate(index_blocks)
    X = dataset.X[index]
    if noise_sd > 0:
        X = X + (noise_sd * rng.standard_normal((X.shape[0], basis.d_z))) @ basis.V.T
    log.info("dataset_inflated", rows_in=dataset.n_samples, rows_out=target_n, noise_sd=noise_sd)
    return SnapshotDataset(
        X=X,
        times=np.concatenate(labels),
        grid=dataset.grid,
        gene_names=dataset.gene_names,
        dataset_id=dataset.dataset_id,
    )
