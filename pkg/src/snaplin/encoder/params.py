"""
Parameters of the operator-predicting MLP.

The network maps ``[z, t * time_scale, one_hot(idx)]`` through ``depth``
hidden leaky-ReLU layers of ``width`` units to ``d_z^2`` basis entries followed
by the free (non-pinned) eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from ..errors import CheckpointFormatError, DimensionMismatchError

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True, eq=False)
class DenseLayer:
    W: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)


@dataclass(frozen=True, eq=False)
class EncoderParams:
    layers: Tuple[DenseLayer, ...]
    d_z: int
    n_datasets: int = 0
    zero_mask: Tuple[int, ...] = ()
    out_scale: float = 0.01
    negative_slope: float = 0.01
    time_scale: float = 1.0

    def __post_init__(self) -> None:
        mask = tuple(sorted(set(int(i) for i in self.zero_mask)))
        if any(i < 0 or i >= self.d_z for i in mask):
            raise DimensionMismatchError(f"zero_mask {list(mask)} out of range for d_z={self.d_z}")
        object.__setattr__(self, "zero_mask", mask)
        if self.layers[0].W.shape[0] != self.input_width:
            raise DimensionMismatchError(
                f"first layer expects {self.layers[0].W.shape[0]} inputs, "
                f"configuration implies {self.input_width}"
            )
        if self.layers[-1].W.shape[1] != self.output_width:
            raise DimensionMismatchError(
                f"last layer emits {self.layers[-1].W.shape[1]} outputs, "
                f"configuration implies {self.output_width}"
            )

    @property
    def input_width(self) -> int:
        return self.d_z + 1 + self.n_datasets

    @property
    def n_free(self) -> int:
        return self.d_z - len(self.zero_mask)

    @property
    def output_width(self) -> int:
        return self.d_z * self.d_z + self.n_free

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    def arrays(self) -> List[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]`` in optimizer order."""
        out: List[np.ndarray] = []
        for layer in self.layers:
            out.extend((layer.W, layer.b))
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "EncoderParams":
        if len(arrays) != 2 * len(self.layers):
            raise DimensionMismatchError(f"expected {2 * len(self.layers)} arrays, got {len(arrays)}")
        layers = tuple(
            DenseLayer(W=np.array(arrays[2 * k], dtype=np.float64), b=np.array(arrays[2 * k + 1], dtype=np.float64))
            for k in range(len(self.layers))
        )
        return EncoderParams(
            layers=layers,
            d_z=self.d_z,
            n_datasets=self.n_datasets,
            zero_mask=self.zero_mask,
            out_scale=self.out_scale,
            negative_slope=self.negative_slope,
            time_scale=self.time_scale,
        )

    def n_parameters(self) -> int:
        return int(sum(array.size for array in self.arrays()))


def init_params(
    depth: int,
    width: int,
    d_z: int,
    n_datasets: int = 0,
    seed: SeedLike = 0,
    zero_mask: Sequence[int] = (),
    out_scale: float = 0.01,
    negative_slope: float = 0.01,
    time_scale: float = 1.0,
) -> EncoderParams:
    """
    Kaiming-normal weights (fan-in, leaky-ReLU gain) and zero biases.

    The last layer's weights are multiplied by ``out_scale`` so the predicted
    operators start close to ``P = I``, ``lambda = 0``.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if width < d_z * d_z + d_z:
        raise ValueError(f"width must be >= d_z^2 + d_z = {d_z * d_z + d_z}, got {width}")
    rng = np.random.default_rng(seed)
    gain = np.sqrt(2.0 / (1.0 + negative_slope**2))
    n_free = d_z - len(set(zero_mask))
    sizes = [d_z + 1 + n_datasets] + [width] * depth + [d_z * d_z + n_free]

    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = rng.standard_normal((fan_in, fan_out)) * (gain / np.sqrt(fan_in))
        if k == len(sizes) - 2:
            W = W * out_scale
        layers.append(DenseLayer(W=W, b=np.zeros(fan_out)))
    return EncoderParams(
        layers=tuple(layers),
        d_z=d_z,
        n_datasets=n_datasets,
        zero_mask=tuple(zero_mask),
        out_scale=out_scale,
        negative_slope=negative_slope,
        time_scale=time_scale,
    )


def params_to_dict(params: EncoderParams) -> Dict[str, Any]:
    """JSON-ready mapping; float64 values survive the round trip exactly."""
    return {
        "d_z": params.d_z,
        "n_datasets": params.n_datasets,
        "zero_mask": list(params.zero_mask),
        "out_scale": params.out_scale,
        "negative_slope": params.negative_slope,
        "time_scale": params.time_scale,
        "layers": [
            {"shape": list(layer.W.shape), "W": layer.W.reshape(-1).tolist(), "b": layer.b.tolist()}
            for layer in params.layers
        ],
    }


def params_from_dict(payload: Dict[str, Any], source: Any = "<memory>") -> EncoderParams:
    try:
        layers = []
        for entry in payload["layers"]:
            fan_in, fan_out = entry["shape"]
            W = np.array(entry["W"], dtype=np.float64).reshape(fan_in, fan_out)
            b = np.array(entry["b"], dtype=np.float64).reshape(fan_out)
            layers.append(DenseLayer(W=W, b=b))
        return EncoderParams(
            layers=tuple(layers),
            d_z=int(payload["d_z"]),
            n_datasets=int(payload["n_datasets"]),
            zero_mask=tuple(payload["zero_mask"]),
            out_scale=float(payload["out_scale"]),
            negative_slope=float(payload["negative_slope"]),
            time_scale=float(payload["time_scale"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(source, f"malformed encoder parameters: {exc}") from exc
