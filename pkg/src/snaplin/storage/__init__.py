"""Run manifests and the run registry."""

from .manifest import RunManifest, RunRecord, RunRegistry, file_sha256, load_manifest

__all__ = ["RunManifest", "RunRecord", "RunRegistry", "file_sha256", "load_manifest"]
