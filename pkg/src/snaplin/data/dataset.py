"""
Snapshot datasets: observation rows labelled with times on a discrete grid.

Files are CSV or TSV with a leading ``time`` column followed by one column per
gene. An optional sidecar JSON (same stem, ``.json``) declares the grid and a
dataset index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import DatasetParseError, DimensionMismatchError, GridError
from ..logger import get_logger

log = get_logger(__name__)

TIME_COLUMN = "time"


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing experimental time points."""

    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values:
            raise GridError("time grid is empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise GridError(f"time grid must be strictly increasing, got {list(values)}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __contains__(self, t: object) -> bool:
        return isinstance(t, (int, float, np.floating)) and float(t) in self.values

    def index_of(self, t: float) -> int:
        try:
            return self.values.index(float(t))
        except ValueError:
            raise GridError(f"time {t} is not on the grid {list(self.values)}") from None

    def interior(self) -> Tuple[float, ...]:
        return self.values[1:-1]

    def neighbors(self, t: float) -> Tuple[float, float]:
        """Grid points immediately before and after an interior time."""
        index = self.index_of(t)
        if index == 0 or index == len(self.values) - 1:
            raise GridError(f"time {t} is on the grid boundary; no neighbors on both sides")
        return self.values[index - 1], self.values[index + 1]

    def without(self, t: Optional[float]) -> Tuple[float, ...]:
        if t is None:
            return self.values
        self.index_of(t)
        return tuple(v for v in self.values if v != float(t))


@dataclass(frozen=True, eq=False)
class SnapshotDataset:
    """
    Observation matrix ``X`` (N x d_x) with per-row time labels.

    Every label lies on ``grid`` and every grid time has at least one row.
    """

    X: np.ndarray
    times: np.ndarray
    grid: TimeGrid
    gene_names: Optional[Tuple[str, ...]] = None
    dataset_id: Optional[int] = None
    _buckets: Dict[float, np.ndarray] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64)
        times = np.array(self.times, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise DimensionMismatchError(f"X must be 2-D, got shape {X.shape}")
        if times.shape[0] != X.shape[0]:
            raise DimensionMismatchError(
                f"{times.shape[0]} time labels for {X.shape[0]} observation rows"
            )
        if self.gene_names is not None:
            names = tuple(str(name) for name in self.gene_names)
            if len(names) != X.shape[1]:
                raise DimensionMismatchError(
                    f"{len(names)} gene names for {X.shape[1]} observation columns"
                )
            object.__setattr__(self, "gene_names", names)
        grid_values = set(self.grid.values)
        for row, label in enumerate(times):
            if float(label) not in grid_values:
                raise GridError(f"time label {label} (row {row}) is not on the declared grid")
        for t in self.grid:
            rows = np.flatnonzero(times == t)
            if rows.size == 0:
                raise GridError(f"grid time {t} has no samples")
            self._buckets[t] = rows
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "times", times)

    @property
    def n_samples(self) -> int:
        return int(self.X.shape[0])

    @property
    def d_x(self) -> int:
        return int(self.X.shape[1])

    def rows_at(self, t: float) -> np.ndarray:
        self.grid.index_of(t)
        return self._buckets[float(t)]

    def marginal(self, t: float) -> np.ndarray:
        """Observation rows of the empirical marginal at ``t``."""
        return self.X[self.rows_at(t)]

    def counts(self) -> Dict[float, int]:
        return {t: int(rows.size) for t, rows in self._buckets.items()}

    def genes(self) -> Tuple[str, ...]:
        if self.gene_names is not None:
            return self.gene_names
        return tuple(f"g{j}" for j in range(self.d_x))


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _separator(path: Path) -> str:
    return "\t" if path.suffix.lower() in {".tsv", ".tab"} else ","


def load_dataset(
    path: Path,
    grid: Optional[Sequence[float]] = None,
    dataset_id: Optional[int] = None,
) -> SnapshotDataset:
    """
    Parse a snapshot file and validate it against its grid.

    The grid comes from ``grid``, else from the sidecar JSON, else from the
    distinct labels found in the file.
    """
    if not path.is_file():
        raise DatasetParseError(f"dataset file not found: {path}")
    sidecar: Mapping[str, object] = {}
    if _sidecar_path(path).is_file():
        sidecar = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))

    frame = pd.read_csv(
        path,
        sep=_separator(path),
        dtype=str,
        keep_default_na=False,
    )
    if frame.columns.empty or frame.columns[0] != TIME_COLUMN:
        raise DatasetParseError(
            f"first column must be '{TIME_COLUMN}'",
            row=1,
            column=str(frame.columns[0]) if len(frame.columns) else None,
        )
    if frame.shape[1] < 2:
        raise DatasetParseError("no observation columns after 'time'", row=1)

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        column = str(frame.columns[col])
        # Header is line 1; data rows start at line 2.
        raise DatasetParseError(
            f"non-numeric entry {frame.iat[row, col]!r}", row=int(row) + 2, column=column
        )
    # Re-parse with exact round-trip float conversion.
    values = pd.read_csv(
        path, sep=_separator(path), float_precision="round_trip"
    ).to_numpy(dtype=np.float64)
    times = values[:, 0]

    declared = grid if grid is not None else sidecar.get("grid")
    if declared is not None:
        time_grid = TimeGrid(tuple(float(v) for v in declared))  # type: ignore[union-attr]
        allowed = set(time_grid.values)
        for row, label in enumerate(times):
            if float(label) not in allowed:
                raise DatasetParseError(
                    f"time label {label} is not in the declared grid {list(time_grid.values)}",
                    row=row + 2,
                    column=TIME_COLUMN,
                )
        for t in time_grid:
            if not np.any(times == t):
                raise DatasetParseError(f"grid time {t} has an empty bucket", column=TIME_COLUMN)
    else:
        time_grid = TimeGrid(tuple(np.unique(times).tolist()))

    if dataset_id is None and sidecar.get("dataset_id") is not None:
        dataset_id = int(sidecar["dataset_id"])  # type: ignore[arg-type]
    dataset = SnapshotDataset(
        X=values[:, 1:],
        times=times,
        grid=time_grid,
        gene_names=tuple(str(c) for c in frame.columns[1:]),
        dataset_id=dataset_id,
    )
    log.info(
        "dataset_loaded",
        path=str(path),
        rows=dataset.n_samples,
        genes=dataset.d_x,
        per_time={str(t): n for t, n in dataset.counts().items()},
    )
    return dataset


def save_dataset(dataset: SnapshotDataset, path: Path) -> Path:
    """Write ``dataset`` plus its sidecar JSON; floats are written round-trip exact."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.X, columns=list(dataset.genes()))
    frame.insert(0, TIME_COLUMN, dataset.times)
    frame.to_csv(path, sep=_separator(path), index=False)
    sidecar = {"grid": list(dataset.grid.values), "dataset_id": dataset.dataset_id}
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    log.debug("dataset_saved", path=str(path), rows=dataset.n_samples)
    return path
