"""
Independent numerical oracles for the closed-form evolution.

Neither function is used at training time; both exist so the eigenbasis path
can be checked against arithmetic that shares none of its code.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.integrate import simpson

VectorField = Callable[[np.ndarray, float], np.ndarray]

TAYLOR_MIN_TERMS = 20
TAYLOR_MAX_NORM = 2.0
QUADRATURE_MIN_NODES = 16


def matexp_taylor_oracle(A: np.ndarray, dt: float, terms: int = 30) -> np.ndarray:
    """Truncated series ``sum_{k=0..terms} (A dt)^k / k!``."""
    M = np.asarray(A, dtype=np.float64) * float(dt)
    if terms < TAYLOR_MIN_TERMS:
        raise ValueError(f"terms must be >= {TAYLOR_MIN_TERMS}, got {terms}")
    if np.linalg.norm(M, "fro") > TAYLOR_MAX_NORM:
        raise ValueError(
            f"||A dt||_F must be <= {TAYLOR_MAX_NORM} for the series to be trusted"
        )
    result = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ M / k
        result = result + term
    return result


def _jacobian(f: VectorField, z: np.ndarray, t: float, h: float) -> np.ndarray:
    d = z.shape[0]
    columns = []
    for k in range(d):
        step = np.zeros(d)
        step[k] = h
        columns.append((np.asarray(f(z + step, t)) - np.asarray(f(z - step, t))) / (2.0 * h))
    return np.stack(columns, axis=1)


def factorization_oracle(
    f: VectorField,
    z: np.ndarray,
    t: float,
    nodes: int = QUADRATURE_MIN_NODES,
    h: float = 1e-5,
) -> np.ndarray:
    """
    Matrix ``A(z, t) = int_0^1 D_z f(s z, t) ds`` so that ``A(z, t) z = f(z, t)``.

    Requires ``f(0, t) = 0``. The integral uses composite Simpson quadrature
    over ``nodes`` intervals (rounded up to even) with central-difference
    Jacobians of step ``h``.
    """
    if nodes < QUADRATURE_MIN_NODES:
        raise ValueError(f"nodes must be >= {QUADRATURE_MIN_NODES}, got {nodes}")
    z = np.asarray(z, dtype=np.float64)
    intervals = nodes + (nodes % 2)
    s = np.linspace(0.0, 1.0, intervals + 1)
    jacobians = np.stack([_jacobian(f, si * z, t, h) for si in s], axis=0)
    return simpson(jacobians, x=s, axis=0)
