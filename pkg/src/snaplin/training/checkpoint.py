"""
Checkpoint container.

Checkpoints are JSON documents holding the encoder weights as exact float64
values, the PCA bases used during training, the resolved configuration and
the bookkeeping of the run that produced them. Wall-clock time lives in the
run log and the manifest only, so re-runs under a fixed seed write identical
files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..config import TrainConfig
from ..data.pca import PcaBasis
from ..encoder.params import EncoderParams, params_from_dict, params_to_dict
from ..errors import CheckpointFormatError
from ..logger import get_logger

log = get_logger(__name__)

CHECKPOINT_FORMAT = "snaplin-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class Checkpoint:
    params: EncoderParams
    bases: List[PcaBasis]
    config: TrainConfig
    step: int
    best_score: float
    wall_clock: float = 0.0
    grids: List[Tuple[float, ...]] = field(default_factory=list)
    dataset_names: List[str] = field(default_factory=list)
    dataset_scores: List[float] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def heldout_time(self) -> Optional[float]:
        return self.config.heldout_time

    @property
    def basis(self) -> PcaBasis:
        return self.bases[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.config.model_dump(mode="json"),
            "config_hash": self.config.config_hash(),
            "seed": self.seed,
            "step": self.step,
            "best_score": self.best_score,
            "grids": [list(grid) for grid in self.grids],
            "dataset_names": list(self.dataset_names),
            "dataset_scores": list(self.dataset_scores),
            "encoder": params_to_dict(self.params),
            "bases": [_basis_to_dict(basis) for basis in self.bases],
        }

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")).hexdigest()


def _basis_to_dict(basis: PcaBasis) -> Dict[str, Any]:
    return {
        "V": basis.V.tolist(),
        "centered": basis.centered,
        "mean": None if basis.mean is None else basis.mean.tolist(),
        "gene_names": None if basis.gene_names is None else list(basis.gene_names),
    }


def _basis_from_dict(payload: Dict[str, Any]) -> PcaBasis:
    return PcaBasis(
        V=np.array(payload["V"], dtype=np.float64),
        centered=bool(payload["centered"]),
        mean=None if payload["mean"] is None else np.array(payload["mean"], dtype=np.float64),
        gene_names=None if payload.get("gene_names") is None else tuple(payload["gene_names"]),
    )


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint.to_dict(), sort_keys=True), encoding="utf-8")
    log.info("checkpoint_saved", path=str(path), step=checkpoint.step, best_score=checkpoint.best_score)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    if not path.is_file():
        raise CheckpointFormatError(path, "file not found")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(path, f"not valid JSON: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointFormatError(path, "missing snaplin-checkpoint marker")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointFormatError(path, f"unsupported version {payload.get('version')}")
    try:
        config = TrainConfig.model_validate(payload["config"])
        bases = [_basis_from_dict(entry) for entry in payload["bases"]]
        checkpoint = Checkpoint(
            params=params_from_dict(payload["encoder"], source=path),
            bases=bases,
            config=config,
            step=int(payload["step"]),
            best_score=float(payload["best_score"]),
            grids=[tuple(float(t) for t in grid) for grid in payload.get("grids", [])],
            dataset_names=list(payload.get("dataset_names", [])),
            dataset_scores=[float(s) for s in payload.get("dataset_scores", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(path, str(exc)) from exc
    if payload.get("config_hash") != config.config_hash():
        raise CheckpointFormatError(path, "config hash does not match the stored configuration")
    return checkpoint
