"""Per-time minibatch draws with replacement."""

from __future__ import annotations

from typing import Dict, Mapping, Sequence

import numpy as np

from ..errors import GridError
from .dataset import SnapshotDataset


def sample_batch(
    dataset: SnapshotDataset, t: float, batch_size: int, seed: int, counter: int = 0
) -> np.ndarray:
    """
    Draw ``batch_size`` rows of the marginal at ``t`` uniformly with replacement.

    The draw is a pure function of ``(seed, counter)``.
    """
    rows = dataset.rows_at(t)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(counter)]))
    return dataset.X[rows[rng.integers(0, rows.size, size=batch_size)]]


class BatchSampler:
    """
    Streams batches from pre-projected marginals.

    ``marginals`` maps each usable time to its rows (usually latent
    coordinates); the sampler owns its generator so several samplers can run
    side by side.
    """

    def __init__(self, marginals: Mapping[float, np.ndarray], rng: np.random.Generator) -> None:
        self.marginals: Dict[float, np.ndarray] = {float(t): np.asarray(v) for t, v in marginals.items()}
        self.rng = rng

    @property
    def times(self) -> Sequence[float]:
        return sorted(self.marginals)

    def draw(self, t: float, batch_size: int) -> np.ndarray:
        try:
            rows = self.marginals[float(t)]
        except KeyError:
            raise GridError(f"no marginal available at time {t}") from None
        return rows[self.rng.integers(0, rows.shape[0], size=batch_size)]
