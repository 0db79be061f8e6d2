import json
from pathlib import Path

from snaplin.storage import RunManifest, RunRegistry, file_sha256, load_manifest


def test_manifest_hashes_inputs_and_round_trips(tmp_path: Path) -> None:
    data = tmp_path / "cells.csv"
    data.write_text("time,a\n0,1\n")
    manifest = RunManifest.for_inputs(
        "train", [data, tmp_path / "absent.csv"], config={"lr": 0.01}, seeds={"master": 3}
    )
    assert manifest.inputs == {str(data): file_sha256(data)}
    manifest.add_output(tmp_path / "checkpoint.json")
    manifest.add_output(tmp_path / "checkpoint.json")
    assert manifest.outputs == [str(tmp_path / "checkpoint.json")]

    path = manifest.write(tmp_path / "out")
    assert path.name == "train.manifest.json"
    assert load_manifest(path) == manifest


def test_comparable_ignores_wall_clock() -> None:
    first = RunManifest("synth", config={"n": 5}, wall_clock=1.5)
    second = RunManifest("synth", config={"n": 5}, wall_clock=9.0)
    assert first != second
    assert first.comparable() == second.comparable()
    assert "wall_clock" not in first.comparable()


def test_registry_registers_and_reloads(tmp_path: Path) -> None:
    registry_path = tmp_path / "runs" / "runs.json"
    registry = RunRegistry(registry_path)
    manifest = RunManifest("pca", config={"d_z": 2})
    record = registry.register(manifest, tmp_path / "pca.manifest.json")
    assert record.run_id.startswith("pca-")
    assert len(record.run_id) == len("pca-") + 16
    assert registry.get(record.run_id) == record

    rerun = RunManifest("pca", config={"d_z": 2}, wall_clock=4.0)
    assert registry.register(rerun, tmp_path / "pca.manifest.json").run_id == record.run_id
    assert len(list(registry.list())) == 1

    reloaded = RunRegistry(registry_path)
    assert reloaded.get(record.run_id).command == "pca"
    assert reloaded.get("missing") is None


def test_corrupt_registry_starts_empty(tmp_path: Path) -> None:
    registry_path = tmp_path / "runs.json"
    registry_path.write_text("{broken")
    registry = RunRegistry(registry_path)
    assert list(registry.list()) == []
    registry.register(RunManifest("eval"), tmp_path / "eval.manifest.json")
    assert len(json.loads(registry_path.read_text())) == 1
