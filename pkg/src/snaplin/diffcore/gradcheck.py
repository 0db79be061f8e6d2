"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from ..logger import get_logger
from .value import Value, backward

log = get_logger(__name__)


@dataclass
class EntryCheck:
    input_index: int
    position: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    """Entrywise comparison of analytic and central-difference gradients."""

    h: float
    tol: float
    atol: float = 1e-8
    entries: List[EntryCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((entry.rel_error for entry in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    def max_rel_error_per_input(self) -> dict[int, float]:
        worst: dict[int, float] = {}
        for entry in self.entries:
            worst[entry.input_index] = max(worst.get(entry.input_index, 0.0), entry.rel_error)
        return worst

    def failures(self) -> List[EntryCheck]:
        return [entry for entry in self.entries if not entry.passed]


def relative_error(analytic: float, numeric: float, floor: float = 1e-12) -> float:
    """``|a - n| / max(|a|, |n|, floor)``."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def entry_passes(analytic: float, numeric: float, tol: float, atol: float) -> bool:
    """``|a - n| <= atol + tol * max(|a|, |n|)``; ``atol`` only matters for gradients near zero."""
    return abs(analytic - numeric) <= atol + tol * max(abs(analytic), abs(numeric))


def evaluate(fn: Callable[..., Value], inputs: Sequence[np.ndarray]) -> float:
    """Evaluate ``fn`` on constant values without recording a graph."""
    output = fn(*[Value(np.array(x, dtype=np.float64)) for x in inputs])
    return float(output.data)


def grad_check(
    fn: Callable[..., Value],
    inputs: Sequence[np.ndarray],
    h: float = 1e-6,
    tol: float = 1e-5,
    atol: float = 1e-8,
) -> GradCheckReport:
    """
    Compare reverse-mode gradients of the scalar ``fn(*inputs)`` with central
    differences ``(f(x + h e_k) - f(x - h e_k)) / 2h`` at every input entry.

    An entry passes when its error is within ``tol`` relative to the larger
    magnitude, plus ``atol``. Failures are reported, never raised.
    """
    if h <= 0 or tol <= 0 or atol < 0:
        raise ValueError("grad_check requires h > 0, tol > 0 and atol >= 0")
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    leaves = [Value(x.copy(), requires_grad=True) for x in arrays]
    backward(fn(*leaves))

    report = GradCheckReport(h=h, tol=tol, atol=atol)
    for index, (array, leaf) in enumerate(zip(arrays, leaves)):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(array)
        for position in np.ndindex(array.shape):
            shifted = [a.copy() for a in arrays]
            shifted[index][position] += h
            upper = evaluate(fn, shifted)
            shifted[index][position] -= 2.0 * h
            lower = evaluate(fn, shifted)
            numeric = (upper - lower) / (2.0 * h)
            value = float(analytic[position])
            error = relative_error(value, numeric)
            report.entries.append(
                EntryCheck(
                    input_index=index,
                    position=tuple(int(p) for p in position),
                    analytic=value,
                    numeric=numeric,
                    rel_error=error,
                    passed=entry_passes(value, numeric, tol, atol),
                )
            )
    if not report.passed:
        log.warning(
            "grad_check_failed",
            failures=len(report.failures()),
            max_rel_error=report.max_rel_error,
        )
    return report
