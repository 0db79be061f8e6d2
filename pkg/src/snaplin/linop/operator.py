"""
Eigendecomposed linear operators and their closed-form time evolution.

An operator ``A = P diag(lambda) P^-1`` is never exponentiated directly:
``exp(A dt) z = P diag(exp(lambda dt)) P^-1 z``. After the one-time inverse
of ``P`` each horizon costs ``O(d_z^2)``.

The numpy functions serve inference and oracles; the ``Value`` functions at
the bottom are the differentiable path used by the encoder and the losses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List

import numpy as np

from ..diffcore import Value, ops
from ..errors import DimensionMismatchError, SingularBasisError

SINGULAR_DET_THRESHOLD = 1e-12


@dataclass(frozen=True, eq=False)
class EigenOperator:
    """Local dynamics ``A = P diag(lam) P^-1`` with optionally pinned zero eigenvalues."""

    P: np.ndarray
    lam: np.ndarray
    zero_mask: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        P = np.array(self.P, dtype=np.float64)
        lam = np.array(self.lam, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or lam.shape != (P.shape[0],):
            raise DimensionMismatchError(
                f"EigenOperator expects P (d, d) and lam (d,), got {P.shape} and {lam.shape}"
            )
        mask = frozenset(int(i) for i in self.zero_mask)
        if any(i < 0 or i >= lam.shape[0] for i in mask):
            raise DimensionMismatchError(f"zero_mask {sorted(mask)} out of range for d={lam.shape[0]}")
        lam[list(mask)] = 0.0
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "zero_mask", mask)

    @property
    def dim(self) -> int:
        return int(self.lam.shape[0])


def check_basis(P: np.ndarray, threshold: float = SINGULAR_DET_THRESHOLD) -> np.ndarray:
    """Return ``det(P)`` (batched allowed), raising if any ``|det|`` is below threshold."""
    det = np.linalg.det(P)
    smallest = np.min(np.abs(det)) if np.ndim(det) else abs(float(det))
    if not np.isfinite(smallest) or smallest < threshold:
        flat = np.atleast_1d(det)
        raise SingularBasisError(float(flat[np.argmin(np.abs(flat))]), threshold)
    return det


def assemble(op: EigenOperator) -> np.ndarray:
    """``A = P diag(lam) P^-1``."""
    check_basis(op.P)
    return (op.P * op.lam[None, :]) @ np.linalg.inv(op.P)


def evolve(op: EigenOperator, z: np.ndarray, dt: float) -> np.ndarray:
    """``exp(A dt) z`` through the eigenbasis."""
    check_basis(op.P)
    coords = np.linalg.solve(op.P, np.asarray(z, dtype=np.float64))
    return op.P @ (np.exp(op.lam * dt) * coords)


def assemble_many(P: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Batched :func:`assemble` over ``P`` of shape ``(B, d, d)`` and ``lam`` ``(B, d)``."""
    check_basis(P)
    return np.matmul(P * lam[:, None, :], np.linalg.inv(P))


def evolve_many(P: np.ndarray, lam: np.ndarray, z: np.ndarray, dt: float) -> np.ndarray:
    """Batched :func:`evolve`; ``z`` has shape ``(B, d)``."""
    check_basis(P)
    coords = np.einsum("bij,bj->bi", np.linalg.inv(P), z)
    return np.einsum("bij,bj->bi", P, np.exp(lam * dt) * coords)


def write_operators_csv(path: Path, operators: Iterable[EigenOperator]) -> int:
    """
    Write operators as CSV rows: ``kind,index,values...``.

    Each operator contributes an ``A`` row (row-major), a ``P`` row (row-major)
    and a ``lambda`` row. Returns the number of operators written.
    """
    count = 0
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        for index, op in enumerate(operators):
            A = assemble(op)
            writer.writerow(["A", index, *map(repr, A.reshape(-1).tolist())])
            writer.writerow(["P", index, *map(repr, op.P.reshape(-1).tolist())])
            writer.writerow(["lambda", index, *map(repr, op.lam.tolist())])
            count += 1
    return count


def read_operators_csv(path: Path) -> List[EigenOperator]:
    """Read operators written by :func:`write_operators_csv`."""
    blocks: dict[int, dict[str, List[float]]] = {}
    with path.open("r", newline="", encoding="utf-8") as handle:
        for row in csv.reader(handle):
            if not row:
                continue
            kind, index, values = row[0], int(row[1]), [float(v) for v in row[2:]]
            blocks.setdefault(index, {})[kind] = values
    operators: List[EigenOperator] = []
    for index in sorted(blocks):
        lam = np.array(blocks[index]["lambda"])
        d = lam.shape[0]
        P = np.array(blocks[index]["P"]).reshape(d, d)
        zero = frozenset(int(i) for i in np.flatnonzero(lam == 0.0))
        operators.append(EigenOperator(P=P, lam=lam, zero_mask=zero))
    return operators


# Differentiable path ---------------------------------------------------------


class Propagator:
    """
    Closed-form flow of a batch of operators from fixed start points.

    ``P^-1 z`` is computed once; :meth:`at` then costs ``O(d_z^2)`` per sample.
    """

    def __init__(self, P: Value, lam: Value, z: Value) -> None:
        self.P = P
        self.lam = lam
        self.z = z
        self.coords = ops.matvec(ops.inv(P), z)

    def at(self, dt: float) -> Value:
        if dt == 0.0:
            return self.z
        growth = ops.exp(ops.scale(self.lam, dt))
        return ops.matvec(self.P, ops.mul(growth, self.coords))

    def velocity(self) -> Value:
        """``A z = P diag(lam) P^-1 z`` without assembling ``A``."""
        return ops.matvec(self.P, ops.mul(self.lam, self.coords))


def assemble_values(P: Value, lam: Value) -> Value:
    """Differentiable batched assembly ``P diag(lam) P^-1`` for ``(B, d, d)`` inputs."""
    batch, d = lam.shape
    diag = ops.reshape(
        ops.matmul(ops.reshape(lam, (batch, 1, d)), Value(_diag_lift(d, batch))),
        (batch, d, d),
    )
    return ops.matmul(ops.matmul(P, diag), ops.inv(P))


def _diag_lift(d: int, batch: int) -> np.ndarray:
    """Constant ``(B, d, d*d)`` map taking ``lam`` to the flattened ``diag(lam)``."""
    lift = np.zeros((d, d * d))
    for i in range(d):
        lift[i, i * d + i] = 1.0
    return np.broadcast_to(lift, (batch, d, d * d)).copy()
