"""
Synthetic snapshot generators with known ground truth.

Every sample is an independent trajectory observed once: each grid time gets
fresh initial states, so only the marginals carry information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm

from ..errors import DimensionMismatchError
from ..logger import get_logger
from .dataset import SnapshotDataset, TimeGrid

log = get_logger(__name__)

SeedLike = Union[int, np.random.SeedSequence]
InitialSampler = Callable[[np.random.Generator, int], np.ndarray]

RK4_STEP = 1e-3


@dataclass(frozen=True, eq=False)
class LinearGroundTruth:
    """Generator of a linear fixture: ``z(t) = exp(A t) z0`` embedded by ``V``."""

    A_star: np.ndarray
    V_embed: np.ndarray
    grid: Tuple[float, ...]
    noise_sd: float


def gaussian_sampler(mean: Sequence[float], cov: np.ndarray) -> InitialSampler:
    mean_ = np.asarray(mean, dtype=np.float64)
    cov_ = np.asarray(cov, dtype=np.float64)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.multivariate_normal(mean_, cov_, size=n, method="cholesky")

    return draw


def point_mass_sampler(z: Sequence[float]) -> InitialSampler:
    point = np.asarray(z, dtype=np.float64)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return np.tile(point, (n, 1))

    return draw


def _embedding(V_embed: Optional[np.ndarray], d_z: int) -> np.ndarray:
    if V_embed is None:
        return np.eye(d_z)
    V = np.asarray(V_embed, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != d_z:
        raise DimensionMismatchError(f"embedding must have {d_z} columns, got shape {V.shape}")
    if np.linalg.norm(V.T @ V - np.eye(d_z)) > 1e-8:
        raise DimensionMismatchError("embedding columns must be orthonormal")
    return V


def random_embedding(d_x: int, d_z: int, seed: SeedLike = 0) -> np.ndarray:
    """Orthonormal ``d_x x d_z`` embedding from the QR factor of a Gaussian matrix."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d_x, d_z)))
    return q * np.sign(np.diag(r))[None, :]


def synth_linear_snapshots(
    A_star: np.ndarray,
    z0_sampler: InitialSampler,
    grid: Sequence[float],
    n_per_time: int,
    V_embed: Optional[np.ndarray] = None,
    noise_sd: float = 0.0,
    seed: SeedLike = 0,
) -> Tuple[SnapshotDataset, LinearGroundTruth]:
    """Snapshots of ``dz/dt = A_star z``, evolved exactly with ``expm``."""
    A = np.asarray(A_star, dtype=np.float64)
    d_z = A.shape[0]
    V = _embedding(V_embed, d_z)
    time_grid = TimeGrid(tuple(grid))
    rng = np.random.default_rng(seed)

    blocks, labels = [], []
    for t in time_grid:
        z0 = np.asarray(z0_sampler(rng, n_per_time), dtype=np.float64)
        z = z0 @ expm(A * t).T
        x = z @ V.T
        if noise_sd > 0:
            x = x + noise_sd * rng.standard_normal(x.shape)
        blocks.append(x)
        labels.append(np.full(n_per_time, t))
    dataset = SnapshotDataset(X=np.vstack(blocks), times=np.concatenate(labels), grid=time_grid)
    log.info("synth_linear_generated", d_z=d_z, d_x=V.shape[0], times=len(time_grid), n_per_time=n_per_time)
    return dataset, LinearGroundTruth(A_star=A, V_embed=V, grid=time_grid.values, noise_sd=noise_sd)


def spiral_field(omega0: float = 1.0, omega_slope: float = 0.5, damping: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """Rotation whose angular speed grows with the radius; ``f(0) = 0``."""

    def f(z: np.ndarray) -> np.ndarray:
        radius = np.linalg.norm(z, axis=-1, keepdims=True)
        omega = omega0 + omega_slope * radius
        rotated = np.stack([-z[..., 1], z[..., 0]], axis=-1)
        return omega * rotated - damping * z

    return f


def rk4_integrate(
    f: Callable[[np.ndarray], np.ndarray], z0: np.ndarray, t: float, step: float = RK4_STEP
) -> np.ndarray:
    """Classical RK4 from 0 to ``t`` with the largest uniform step not above ``step``."""
    z = np.array(z0, dtype=np.float64)
    if t <= 0:
        return z
    n_steps = int(np.ceil(t / step))
    h = t / n_steps
    for _ in range(n_steps):
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return z


def synth_spiral_snapshots(
    grid: Sequence[float],
    n_per_time: int,
    seed: SeedLike = 0,
    damping: float = 0.0,
    omega0: float = 1.0,
    omega_slope: float = 0.5,
    radius_range: Tuple[float, float] = (0.5, 1.5),
    V_embed: Optional[np.ndarray] = None,
    noise_sd: float = 0.0,
) -> SnapshotDataset:
    """
    Snapshots of a nonlinear planar spiral.

    With ``damping=0`` the field is a pure rotation at every radius, so each
    trajectory keeps its initial radius.
    """
    V = _embedding(V_embed, 2)
    time_grid = TimeGrid(tuple(grid))
    rng = np.random.default_rng(seed)
    f = spiral_field(omega0, omega_slope, damping)

    blocks, labels = [], []
    for t in time_grid:
        radius = rng.uniform(*radius_range, size=n_per_time)
        angle = rng.uniform(0.0, 2.0 * np.pi, size=n_per_time)
        z0 = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        x = rk4_integrate(f, z0, t) @ V.T
        if noise_sd > 0:
            x = x + noise_sd * rng.standard_normal(x.shape)
        blocks.append(x)
        labels.append(np.full(n_per_time, t))
    log.info("synth_spiral_generated", times=len(time_grid), n_per_time=n_per_time, damping=damping)
    return SnapshotDataset(X=np.vstack(blocks), times=np.concatenate(labels), grid=time_grid)
