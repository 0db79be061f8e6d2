"""
Graph nodes and the reverse-mode sweep.

A :class:`Value` wraps a float64 array. Values produced by an op that has at
least one gradient-requiring input keep a :class:`Node` pointing at their
parents together with the vector-Jacobian product of that op; everything else
is a constant and records nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import GradientReuseError, NonScalarOutputError

ArrayLike = Union[float, int, Sequence[float], np.ndarray]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


@dataclass(frozen=True)
class Node:
    """Backward rule of the op that produced a value."""

    op: str
    parents: Tuple["Value", ...]
    vjp: VJP


class Value:
    """Differentiable float64 array."""

    __slots__ = ("data", "grad", "node", "requires_grad", "name")
    __array_ufunc__ = None

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        node: Optional[Node] = None,
        name: Optional[str] = None,
    ) -> None:
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.node = node
        self.requires_grad = requires_grad or node is not None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        op = self.node.op if self.node else ("leaf" if self.requires_grad else "const")
        return f"Value<{op}{label}>(shape={self.shape})"

    # Operator sugar. Each dispatches to the closed op set in ``ops``.
    def __add__(self, other: "Value | float") -> "Value":
        from . import ops

        return ops.add(self, other) if isinstance(other, Value) else ops.shift(self, other)

    def __radd__(self, other: float) -> "Value":
        return self.__add__(other)

    def __sub__(self, other: "Value | float") -> "Value":
        from . import ops

        return ops.sub(self, other) if isinstance(other, Value) else ops.shift(self, -other)

    def __rsub__(self, other: float) -> "Value":
        from . import ops

        return ops.shift(ops.scale(self, -1.0), other)

    def __mul__(self, other: "Value | float") -> "Value":
        from . import ops

        return ops.mul(self, other) if isinstance(other, Value) else ops.scale(self, other)

    def __rmul__(self, other: float) -> "Value":
        return self.__mul__(other)

    def __truediv__(self, other: float) -> "Value":
        from . import ops

        return ops.scale(self, 1.0 / float(other))

    def __neg__(self) -> "Value":
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Value") -> "Value":
        from . import ops

        if other.ndim == self.ndim - 1:
            return ops.matvec(self, other)
        return ops.matmul(self, other)

    def __getitem__(self, index: object) -> "Value":
        from . import ops

        return ops.getitem(self, index)

    @property
    def T(self) -> "Value":
        from . import ops

        return ops.transpose(self)


def as_value(data: "Value | ArrayLike") -> Value:
    """Wrap raw data as a constant; values pass through unchanged."""
    return data if isinstance(data, Value) else Value(data)


def _topological_order(output: Value) -> List[Value]:
    order: List[Value] = []
    visited: set[int] = set()
    stack: List[Tuple[Value, bool]] = [(output, False)]
    while stack:
        value, expanded = stack.pop()
        if expanded:
            order.append(value)
            continue
        if id(value) in visited:
            continue
        visited.add(id(value))
        stack.append((value, True))
        if value.node is not None:
            for parent in value.node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(output: Value, accumulate: bool = False) -> List[Value]:
    """
    Propagate d(output)/d(value) to every gradient-requiring value of the graph.

    Each node is visited exactly once in reverse topological order. Leaves
    that still hold a gradient from an earlier pass raise
    :class:`GradientReuseError` unless ``accumulate`` is set, in which case the
    new gradient is added to the stored one. Returns the leaves reached.
    """
    if output.data.size != 1:
        raise NonScalarOutputError(output.shape)
    order = _topological_order(output)
    leaves = [value for value in order if value.is_leaf and value.requires_grad]
    if not accumulate:
        stale = [leaf for leaf in leaves if leaf.grad is not None]
        if stale:
            raise GradientReuseError(
                f"{len(stale)} leaf value(s) already hold gradients; call zero_grad() "
                "or pass accumulate=True"
            )

    pending: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for value in reversed(order):
        upstream = pending.pop(id(value), None)
        if upstream is None:
            continue
        if value.is_leaf:
            value.grad = upstream if value.grad is None else value.grad + upstream
            continue
        value.grad = upstream
        assert value.node is not None
        contributions = value.node.vjp(upstream)
        for parent, contribution in zip(value.node.parents, contributions):
            if contribution is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + contribution
            else:
                pending[key] = contribution
    for leaf in leaves:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
    return leaves


def zero_grad(values: Iterable[Value]) -> None:
    """Clear stored gradients so the next backward pass starts fresh."""
    for value in values:
        value.grad = None


def forward_eval(
    fn: Callable[..., Value], *inputs: "Value | ArrayLike", requires_grad: bool = True
) -> Tuple[Value, List[Value]]:
    """
    Evaluate ``fn`` on ``inputs`` and keep the graph for :func:`backward`.

    Raw arrays become leaves (gradient-requiring unless ``requires_grad`` is
    False); values are passed through. Returns the output and the leaves.
    """
    leaves = [
        x if isinstance(x, Value) else Value(x, requires_grad=requires_grad)
        for x in inputs
    ]
    return fn(*leaves), leaves
