"""
Forward pass of the operator-predicting MLP.

One arithmetic path serves training and inference: :class:`BoundEncoder`
wraps the parameters as diffcore values (gradient-tracking or constant) and
every public function here runs through it.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..diffcore import Value, ops
from ..errors import DimensionMismatchError
from ..linop import EigenOperator, evolve_many
from ..data.pca import PcaBasis, backproject, project
from .params import EncoderParams

IndexLike = Optional[Union[int, np.ndarray]]


def _one_hot(idx: IndexLike, batch: int, n_datasets: int) -> Optional[np.ndarray]:
    if n_datasets == 0:
        if idx is not None and np.any(np.asarray(idx) != 0):
            raise DimensionMismatchError("dataset index given to an unconditioned encoder")
        return None
    if idx is None:
        if n_datasets > 1:
            raise DimensionMismatchError(
                f"encoder is conditioned on {n_datasets} datasets; a dataset index is required"
            )
        idx = 0
    indices = np.broadcast_to(np.asarray(idx, dtype=np.int64), (batch,))
    if np.any(indices < 0) or np.any(indices >= n_datasets):
        raise DimensionMismatchError(f"dataset index out of range for n_datasets={n_datasets}")
    encoded = np.zeros((batch, n_datasets))
    encoded[np.arange(batch), indices] = 1.0
    return encoded


def _eigen_selection(d_z: int, zero_mask: Sequence[int]) -> np.ndarray:
    """``(n_free, d_z)`` matrix scattering free eigenvalues around the pinned zeros."""
    free = [i for i in range(d_z) if i not in set(zero_mask)]
    selection = np.zeros((len(free), d_z))
    selection[np.arange(len(free)), free] = 1.0
    return selection


class BoundEncoder:
    """Encoder parameters wrapped as diffcore leaves."""

    def __init__(self, params: EncoderParams, requires_grad: bool = True) -> None:
        self.params = params
        self.leaves: List[Value] = [Value(array, requires_grad=requires_grad) for array in params.arrays()]
        self._selection = _eigen_selection(params.d_z, params.zero_mask)

    def __call__(self, z: Value, t: Union[float, np.ndarray], idx: IndexLike = None) -> Tuple[Value, Value]:
        """
        Predict ``(P, lam)`` of shapes ``(B, d_z, d_z)`` and ``(B, d_z)`` for a batch
        of operating points.
        """
        params = self.params
        if z.ndim != 2 or z.shape[1] != params.d_z:
            raise DimensionMismatchError(f"expected latent batch (B, {params.d_z}), got {z.shape}")
        batch, d = z.shape
        t_column = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,)).reshape(batch, 1)
        pieces = [z, Value(t_column * params.time_scale)]
        one_hot = _one_hot(idx, batch, params.n_datasets)
        if one_hot is not None:
            pieces.append(Value(one_hot))
        h = ops.concat(pieces, axis=1)

        ones = Value(np.ones((batch, 1)))
        n_layers = len(params.layers)
        for k in range(n_layers):
            W, b = self.leaves[2 * k], self.leaves[2 * k + 1]
            h = ops.add(ops.matmul(h, W), ops.matmul(ones, ops.reshape(b, (1, b.shape[0]))))
            if k < n_layers - 1:
                h = ops.leaky_relu(h, params.negative_slope)

        raw_P = ops.reshape(h[:, : d * d], (batch, d, d))
        identity = Value(np.broadcast_to(np.eye(d), (batch, d, d)).copy())
        P = ops.add(identity, raw_P)
        if params.n_free == 0:
            lam = Value(np.zeros((batch, d)))
        elif params.n_free == d:
            lam = h[:, d * d :]
        else:
            lam = ops.matmul(h[:, d * d :], Value(self._selection))
        return P, lam

    def grads(self) -> List[np.ndarray]:
        return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in self.leaves]


def predict_many(
    params: EncoderParams, z: np.ndarray, t: Union[float, np.ndarray], idx: IndexLike = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Numpy ``(P, lam)`` for a batch of operating points."""
    P, lam = BoundEncoder(params, requires_grad=False)(Value(np.atleast_2d(z)), t, idx)
    return P.data, lam.data


def predict_operator(params: EncoderParams, z: np.ndarray, t: float, idx: Optional[int] = None) -> EigenOperator:
    P, lam = predict_many(params, np.asarray(z, dtype=np.float64).reshape(1, -1), t, idx)
    return EigenOperator(P=P[0], lam=lam[0], zero_mask=frozenset(params.zero_mask))


def push_latent(
    params: EncoderParams,
    z: np.ndarray,
    t: Union[float, np.ndarray],
    dt: Union[float, np.ndarray],
    idx: IndexLike = None,
    chunk: int = 8192,
) -> np.ndarray:
    """Evolve each latent row by its own operator for ``dt``; processed in chunks."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    t_all = np.broadcast_to(np.asarray(t, dtype=np.float64), (z.shape[0],))
    dt_all = np.broadcast_to(np.asarray(dt, dtype=np.float64), (z.shape[0],))
    idx_all = None if idx is None else np.broadcast_to(np.asarray(idx), (z.shape[0],))
    out = np.empty_like(z)
    for start in range(0, z.shape[0], chunk):
        stop = min(start + chunk, z.shape[0])
        P, lam = predict_many(
            params, z[start:stop], t_all[start:stop], None if idx_all is None else idx_all[start:stop]
        )
        out[start:stop] = evolve_many(P, lam * dt_all[start:stop, None], z[start:stop], 1.0)
    return out


def push_forward(
    params: EncoderParams,
    basis: PcaBasis,
    x: np.ndarray,
    t: Union[float, np.ndarray],
    dt: Union[float, np.ndarray],
    idx: IndexLike = None,
) -> np.ndarray:
    """
    Observation-space prediction ``V exp(A dt) V^T x`` with one operator per row.

    ``x`` may be a single observation vector or rows of observations.
    """
    x = np.asarray(x, dtype=np.float64)
    pushed = backproject(basis, push_latent(params, project(basis, x), t, dt, idx))
    return pushed[0] if x.ndim == 1 else pushed


def rollout(
    params: EncoderParams,
    z: np.ndarray,
    t: float,
    targets: Sequence[float],
    idx: IndexLike = None,
    relinearize_every: int = 0,
) -> np.ndarray:
    """
    Latent states at each target time, shape ``(len(targets), *z.shape)``.

    By default one operator per row, predicted at ``(z, t)``, serves every
    horizon. With ``relinearize_every=k`` the operator is re-predicted at the
    state reached after every ``k`` targets.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    current = np.atleast_2d(z)
    current_t = float(t)
    if any(target < current_t for target in targets):
        raise ValueError("rollout targets must not precede the source time")
    outputs = []
    P, lam = predict_many(params, current, current_t, idx)
    for step, target in enumerate(targets, start=1):
        dt = float(target) - current_t
        state = current.copy() if dt == 0.0 else evolve_many(P, lam, current, dt)
        outputs.append(state)
        if relinearize_every and step % relinearize_every == 0:
            current, current_t = state, float(target)
            P, lam = predict_many(params, current, current_t, idx)
    stacked = np.stack(outputs, axis=0)
    return stacked[:, 0] if single else stacked
