"""
The closed op set of the differentiable layer.

Arithmetic: add, sub, scale (scalar multiply), shift (add scalar constant),
mul (elementwise), matmul, matvec, transpose, exp, leaky_relu, absolute,
reciprocal, maximum (with a constant), l1_norm, sq_norm, det, inv, sum, mean.
Structural: reshape, getitem, concat, pairwise_sub.

Shapes must match exactly; there is no implicit broadcasting. Matrix ops
accept a leading batch axis: ``(n, k) @ (k, m)``, ``(B, n, k) @ (B, k, m)``,
``(n, k) @ (k,)`` and ``(B, n, k) @ (B, k)``.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeMismatchError
from .value import Node, Value, VJP

Axis = Optional[Union[int, Tuple[int, ...]]]

DEFAULT_NEGATIVE_SLOPE = 0.01


def _make(data: np.ndarray, op: str, parents: Sequence[Value], vjp: VJP) -> Value:
    if any(parent.requires_grad for parent in parents):
        return Value(data, node=Node(op=op, parents=tuple(parents), vjp=vjp))
    return Value(data)


def _require_same_shape(op: str, a: Value, b: Value) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(op, (a.shape, b.shape))


def add(a: Value, b: Value) -> Value:
    _require_same_shape("add", a, b)
    return _make(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Value, b: Value) -> Value:
    _require_same_shape("sub", a, b)
    return _make(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def scale(a: Value, factor: float) -> Value:
    factor = float(factor)
    return _make(a.data * factor, "scale", (a,), lambda g: (g * factor,))


def shift(a: Value, offset: float) -> Value:
    offset = float(offset)
    return _make(a.data + offset, "shift", (a,), lambda g: (g,))


def mul(a: Value, b: Value) -> Value:
    _require_same_shape("mul", a, b)
    return _make(a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data))


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a: Value, b: Value) -> Value:
    valid = (
        a.ndim == b.ndim
        and a.ndim in (2, 3)
        and a.shape[-1] == b.shape[-2]
        and a.shape[:-2] == b.shape[:-2]
    )
    if not valid:
        raise ShapeMismatchError("matmul", (a.shape, b.shape))
    out = np.matmul(a.data, b.data)
    return _make(
        out,
        "matmul",
        (a, b),
        lambda g: (np.matmul(g, _swap(b.data)), np.matmul(_swap(a.data), g)),
    )


def matvec(a: Value, x: Value) -> Value:
    valid = (
        a.ndim in (2, 3)
        and x.ndim == a.ndim - 1
        and a.shape[-1] == x.shape[-1]
        and a.shape[:-2] == x.shape[:-1]
    )
    if not valid:
        raise ShapeMismatchError("matvec", (a.shape, x.shape))
    out = np.einsum("...ij,...j->...i", a.data, x.data)

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = g[..., :, None] * x.data[..., None, :]
        grad_x = np.einsum("...ij,...i->...j", a.data, g)
        return grad_a, grad_x

    return _make(out, "matvec", (a, x), vjp)


def transpose(a: Value) -> Value:
    if a.ndim < 2:
        raise ShapeMismatchError("transpose", (a.shape,))
    return _make(_swap(a.data).copy(), "transpose", (a,), lambda g: (_swap(g),))


def exp(a: Value) -> Value:
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def leaky_relu(a: Value, negative_slope: float = DEFAULT_NEGATIVE_SLOPE) -> Value:
    slope = np.where(a.data > 0.0, 1.0, negative_slope)
    return _make(a.data * slope, "leaky_relu", (a,), lambda g: (g * slope,))


def absolute(a: Value) -> Value:
    # sign(0) = 0: the one-sided choice at the kink.
    sign = np.sign(a.data)
    return _make(np.abs(a.data), "absolute", (a,), lambda g: (g * sign,))


def reciprocal(a: Value) -> Value:
    out = 1.0 / a.data
    return _make(out, "reciprocal", (a,), lambda g: (-g * out * out,))


def maximum(a: Value, floor: float) -> Value:
    floor = float(floor)
    passes = a.data > floor
    return _make(
        np.where(passes, a.data, floor), "maximum", (a,), lambda g: (g * passes,)
    )


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis: Axis) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    axes = (axis,) if isinstance(axis, int) else axis
    axes = tuple(ax % len(shape) for ax in axes)
    return np.broadcast_to(np.expand_dims(g, axes), shape).copy()


def l1_norm(a: Value, axis: Axis = -1) -> Value:
    sign = np.sign(a.data)
    out = np.sum(np.abs(a.data), axis=axis)
    return _make(
        out, "l1_norm", (a,), lambda g: (_expand_reduced(g, a.shape, axis) * sign,)
    )


def sq_norm(a: Value, axis: Axis = -1) -> Value:
    out = np.sum(a.data * a.data, axis=axis)
    return _make(
        out,
        "sq_norm",
        (a,),
        lambda g: (2.0 * _expand_reduced(g, a.shape, axis) * a.data,),
    )


def _require_square(op: str, a: Value) -> None:
    if a.ndim not in (2, 3) or a.shape[-1] != a.shape[-2]:
        raise ShapeMismatchError(op, (a.shape,))


def det(a: Value) -> Value:
    """Determinant from an LU factorization with partial pivoting (LAPACK getrf)."""
    _require_square("det", a)
    out = np.linalg.det(a.data)

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        inverse_t = _swap(np.linalg.inv(a.data))
        return (np.asarray(g * out)[..., None, None] * inverse_t,)

    return _make(np.asarray(out), "det", (a,), vjp)


def inv(a: Value) -> Value:
    """Matrix inverse from an LU factorization with partial pivoting."""
    _require_square("inv", a)
    out = np.linalg.inv(a.data)

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        out_t = _swap(out)
        return (-np.matmul(np.matmul(out_t, g), out_t),)

    return _make(out, "inv", (a,), vjp)


def sum(a: Value, axis: Axis = None) -> Value:  # noqa: A001 - mirrors numpy naming
    out = np.sum(a.data, axis=axis)
    return _make(
        np.asarray(out), "sum", (a,), lambda g: (_expand_reduced(g, a.shape, axis),)
    )


def mean(a: Value, axis: Axis = None) -> Value:
    out = np.mean(a.data, axis=axis)
    count = a.data.size // max(np.asarray(out).size, 1)
    return _make(
        np.asarray(out),
        "mean",
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis) / count,),
    )


def reshape(a: Value, shape: Tuple[int, ...]) -> Value:
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatchError("reshape", (a.shape, tuple(shape))) from exc
    return _make(out.copy(), "reshape", (a,), lambda g: (g.reshape(a.shape),))


def getitem(a: Value, index: object) -> Value:
    out = a.data[index]  # type: ignore[index]

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)  # type: ignore[arg-type]
        return (grad,)

    return _make(np.array(out), "getitem", (a,), vjp)


def concat(values: Sequence[Value], axis: int = -1) -> Value:
    if not values:
        raise ShapeMismatchError("concat", ())
    ndim = values[0].ndim
    axis_ = axis % ndim
    reference = tuple(dim for i, dim in enumerate(values[0].shape) if i != axis_)
    for value in values:
        other = tuple(dim for i, dim in enumerate(value.shape) if i != axis_)
        if value.ndim != ndim or other != reference:
            raise ShapeMismatchError("concat", [v.shape for v in values])
    out = np.concatenate([value.data for value in values], axis=axis_)
    bounds = np.cumsum([0] + [value.shape[axis_] for value in values])

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis_)
            for i in range(len(values))
        )

    return _make(out, "concat", tuple(values), vjp)


def pairwise_sub(x: Value, y: Value) -> Value:
    """``out[i, j] = x[i] - y[j]`` for point sets of shape ``(n, d)`` and ``(m, d)``."""
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeMismatchError("pairwise_sub", (x.shape, y.shape))
    out = x.data[:, None, :] - y.data[None, :, :]
    return _make(
        out, "pairwise_sub", (x, y), lambda g: (g.sum(axis=1), -g.sum(axis=0))
    )
