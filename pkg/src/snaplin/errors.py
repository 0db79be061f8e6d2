"""
Structured exceptions raised across snaplin.

Each error keeps the values that caused it as attributes so callers (and the
CLI) can report them without parsing messages.
"""

from __future__ import annotations

from typing import Any, Mapping, Optional, Sequence, Tuple


class SnaplinError(Exception):
    """Root of every error raised intentionally by snaplin."""


class ShapeMismatchError(SnaplinError, ValueError):
    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]]) -> None:
        self.op = op
        self.shapes = tuple(tuple(shape) for shape in shapes)
        rendered = ", ".join(str(shape) for shape in self.shapes)
        super().__init__(f"{op}: incompatible operand shapes {rendered}")


class NonScalarOutputError(SnaplinError, ValueError):
    def __init__(self, shape: Tuple[int, ...]) -> None:
        self.shape = tuple(shape)
        super().__init__(f"backward requires a scalar output, got shape {self.shape}")


class GradientReuseError(SnaplinError, RuntimeError):
    """A leaf still holds a gradient from an earlier backward pass."""


class SingularBasisError(SnaplinError, ValueError):
    def __init__(self, det: float, threshold: float) -> None:
        self.det = float(det)
        self.threshold = float(threshold)
        super().__init__(
            f"eigenvector basis is near-singular: |det(P)|={abs(self.det):.3e} "
            f"< {self.threshold:.1e}"
        )


class DatasetParseError(SnaplinError, ValueError):
    def __init__(
        self, reason: str, row: Optional[int] = None, column: Optional[str] = None
    ) -> None:
        self.reason = reason
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        where = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{reason}{where}")


class GridError(SnaplinError, ValueError):
    """Time label or grid violates the snapshot-grid contract."""


class DimensionMismatchError(SnaplinError, ValueError):
    """Arrays, bases or datasets disagree on a dimension."""


class GeneNotFoundError(SnaplinError, KeyError):
    def __init__(self, gene: str, suggestions: Sequence[str]) -> None:
        self.gene = gene
        self.suggestions = list(suggestions)
        hint = f"; did you mean {', '.join(self.suggestions)}?" if self.suggestions else ""
        super().__init__(f"unknown gene '{gene}'{hint}")

    def __str__(self) -> str:
        return str(self.args[0])


class RegulatoryDbParseError(SnaplinError, ValueError):
    def __init__(self, line: int, reason: str) -> None:
        self.line = line
        self.reason = reason
        super().__init__(f"regulatory database line {line}: {reason}")


class TrainingDivergedError(SnaplinError, RuntimeError):
    def __init__(
        self,
        step: int,
        components: Mapping[str, float],
        det_stats: Mapping[str, float],
        reason: str = "non-finite loss",
    ) -> None:
        self.step = step
        self.components = dict(components)
        self.det_stats = dict(det_stats)
        self.reason = reason
        super().__init__(
            f"{reason} at step {step}: components={self.components} "
            f"det(P)={self.det_stats}"
        )


class CheckpointFormatError(SnaplinError, ValueError):
    def __init__(self, path: Any, reason: str) -> None:
        self.path = path
        self.reason = reason
        super().__init__(f"invalid checkpoint {path}: {reason}")


class TransportError(SnaplinError, ValueError):
    """Point clouds or weights unusable for an optimal-transport problem."""


class ConfigurationError(SnaplinError, ValueError):
    """Settings that are individually valid but cannot run together."""
