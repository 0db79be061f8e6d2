from typing import Callable, Sequence

import numpy as np
import pytest

from snaplin.encoder import DenseLayer, EncoderParams


def constant_operator_params(
    P: np.ndarray,
    lam: Sequence[float],
    depth: int = 1,
    width: int = 8,
    n_datasets: int = 0,
    zero_mask: Sequence[int] = (),
) -> EncoderParams:
    """Encoder whose hidden weights are zero, so every input maps to ``(P, lam)``."""
    P = np.asarray(P, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    d = lam.shape[0]
    free = [i for i in range(d) if i not in set(zero_mask)]
    sizes = [d + 1 + n_datasets] + [width] * depth + [d * d + len(free)]
    layers = [DenseLayer(W=np.zeros((a, b)), b=np.zeros(b)) for a, b in zip(sizes[:-1], sizes[1:])]
    layers[-1] = DenseLayer(
        W=np.zeros((sizes[-2], sizes[-1])),
        b=np.concatenate([(P - np.eye(d)).reshape(-1), lam[free]]),
    )
    return EncoderParams(layers=tuple(layers), d_z=d, n_datasets=n_datasets, zero_mask=tuple(zero_mask))


@pytest.fixture
def constant_encoder() -> Callable[..., EncoderParams]:
    return constant_operator_params
