"""
Run manifests and the local run registry.

Every CLI command writes a ``<command>.manifest.json`` next to its outputs and
records it in a JSON catalogue under the workspace directory. Two manifests of
deterministic re-runs differ only in ``wall_clock``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional

from ..logger import get_logger
from ..version import __version__

log = get_logger(__name__)

_HASH_CHUNK = 1 << 20


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for block in iter(lambda: handle.read(_HASH_CHUNK), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce one command invocation."""

    command: str
    config: Dict[str, Any] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    deterministic: bool = True
    wall_clock: float = 0.0
    version: str = __version__

    @classmethod
    def for_inputs(
        cls,
        command: str,
        inputs: Iterable[Path],
        config: Optional[Mapping[str, Any]] = None,
        seeds: Optional[Mapping[str, int]] = None,
        deterministic: bool = True,
    ) -> "RunManifest":
        return cls(
            command=command,
            config=dict(config or {}),
            seeds=dict(seeds or {}),
            inputs={str(path): file_sha256(path) for path in inputs if path.is_file()},
            deterministic=deterministic,
        )

    def add_output(self, path: Path) -> None:
        if str(path) not in self.outputs:
            self.outputs.append(str(path))

    def comparable(self) -> Dict[str, Any]:
        """Payload without wall-clock, for equality between re-runs."""
        payload = asdict(self)
        payload.pop("wall_clock")
        return payload

    def write(self, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.command}.manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True), encoding="utf-8")
        log.info("manifest_written", command=self.command, path=str(path), outputs=len(self.outputs))
        return path


def load_manifest(path: Path) -> RunManifest:
    return RunManifest(**json.loads(path.read_text(encoding="utf-8")))


@dataclass
class RunRecord:
    """Catalogue entry pointing at a written manifest."""

    run_id: str
    command: str
    manifest_path: str
    wall_clock: float = 0.0


class RunRegistry:
    """JSON-backed catalogue of executed runs."""

    def __init__(self, registry_path: Path) -> None:
        self.registry_path = registry_path
        self.registry_path.parent.mkdir(parents=True, exist_ok=True)
        self._records: Dict[str, RunRecord] = {}
        self._load()

    def _load(self) -> None:
        if self.registry_path.exists():
            try:
                data = json.loads(self.registry_path.read_text())
                for run_id, payload in data.items():
                    self._records[run_id] = RunRecord(**payload)
                log.info("registry_loaded", count=len(self._records))
            except (json.JSONDecodeError, TypeError):
                log.warning("registry_load_failed", path=str(self.registry_path))

    def _persist(self) -> None:
        data = {run_id: asdict(record) for run_id, record in self._records.items()}
        self.registry_path.write_text(json.dumps(data, indent=2))
        log.debug("registry_persisted", count=len(self._records))

    def register(self, manifest: RunManifest, manifest_path: Path) -> RunRecord:
        digest = hashlib.sha256(
            json.dumps(manifest.comparable(), sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]
        record = RunRecord(
            run_id=f"{manifest.command}-{digest}",
            command=manifest.command,
            manifest_path=str(manifest_path),
            wall_clock=manifest.wall_clock,
        )
        self._records[record.run_id] = record
        log.info("run_registered", run_id=record.run_id)
        self._persist()
        return record

    def get(self, run_id: str) -> Optional[RunRecord]:
        return self._records.get(run_id)

    def list(self) -> Iterable[RunRecord]:
        return list(self._records.values())
