"""Snapshot datasets, PCA bases, batch sampling and synthetic fixtures."""

from .dataset import SnapshotDataset, TimeGrid, load_dataset, save_dataset
from .inflate import bucket_quotas, inflate_dataset
from .pca import PcaBasis, backproject, fit_pca, load_basis, project, save_basis
from .sampling import BatchSampler, sample_batch
from .synthetic import (
    LinearGroundTruth,
    gaussian_sampler,
    point_mass_sampler,
    random_embedding,
    rk4_integrate,
    spiral_field,
    synth_linear_snapshots,
    synth_spiral_snapshots,
)

__all__ = [
    "BatchSampler",
    "LinearGroundTruth",
    "PcaBasis",
    "SnapshotDataset",
    "TimeGrid",
    "backproject",
    "bucket_quotas",
    "fit_pca",
    "gaussian_sampler",
    "inflate_dataset",
    "load_basis",
    "load_dataset",
    "point_mass_sampler",
    "project",
    "random_embedding",
    "rk4_integrate",
    "sample_batch",
    "save_basis",
    "save_dataset",
    "spiral_field",
    "synth_linear_snapshots",
    "synth_spiral_snapshots",
]
