"""
Experiment workflow orchestration.

Each public method corresponds to one CLI command: it loads inputs, runs the
numerical core, writes its outputs and a RunManifest, and registers the run.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence

import numpy as np

from ..config import TrainConfig
from ..data import (
    fit_pca,
    gaussian_sampler,
    inflate_dataset,
    load_basis,
    load_dataset,
    random_embedding,
    save_basis,
    save_dataset,
    synth_linear_snapshots,
    synth_spiral_snapshots,
)
from ..data.dataset import SnapshotDataset
from ..data.pca import PcaBasis
from ..errors import ConfigurationError, GridError
from ..evaluation import EvalReport, evaluate_protocol, score_baselines
from ..interactions import (
    aggregate_weights,
    classify_edges,
    export_operators,
    load_regulatory_db,
    summarize_ensemble,
    top_source_genes,
)
from ..logger import get_logger
from ..seeding import SeedStreams
from ..settings import AppSettings, settings as default_settings
from ..storage import RunManifest, RunRegistry
from ..training import (
    Checkpoint,
    TrainingCallbacks,
    leave_one_out,
    load_checkpoint,
    save_checkpoint,
    train_amortized,
    train_single,
)

log = get_logger(__name__)

DEFAULT_LINEAR_OPERATOR = np.array([[-0.2, -1.0], [1.0, -0.3]])
DEFAULT_GRID = (0.0, 1.0, 2.0)


@dataclass
class ExperimentCallbacks:
    stage: Optional[Callable[[str], None]] = None
    training: Optional[TrainingCallbacks] = None


@dataclass
class CommandResult:
    """Outputs of one command and the manifest describing it."""

    outputs: List[Path] = field(default_factory=list)
    manifest_path: Optional[Path] = None
    details: Dict[str, object] = field(default_factory=dict)


class ExperimentService:
    """High-level service that chains data preparation, training, evaluation and analysis."""

    def __init__(
        self,
        app_settings: Optional[AppSettings] = None,
        registry: Optional[RunRegistry] = None,
    ) -> None:
        self.settings = app_settings or default_settings
        self.registry = registry or RunRegistry(self.settings.workspace_root / "runs.json")

    @property
    def n_threads(self) -> int:
        return self.settings.resolved_threads()

    def _finish(self, manifest: RunManifest, started: float, out_dir: Path, result: CommandResult) -> CommandResult:
        for path in result.outputs:
            manifest.add_output(path)
        manifest.wall_clock = time.monotonic() - started
        result.manifest_path = manifest.write(out_dir)
        self.registry.register(manifest, result.manifest_path)
        log.info("command_completed", command=manifest.command, outputs=len(manifest.outputs), wall_clock=manifest.wall_clock)
        return result

    def _manifest(
        self,
        command: str,
        inputs: Sequence[Path],
        config: Optional[Dict[str, object]] = None,
        seeds: Optional[Dict[str, int]] = None,
    ) -> RunManifest:
        return RunManifest.for_inputs(
            command,
            inputs,
            config=config,
            seeds=seeds,
            deterministic=self.settings.deterministic,
        )

    def _stage(self, callbacks: Optional[ExperimentCallbacks], name: str) -> None:
        if callbacks and callbacks.stage:
            callbacks.stage(name)

    def _basis_for(self, dataset: SnapshotDataset, basis_path: Optional[Path], d_z: int) -> PcaBasis:
        if basis_path is not None:
            return load_basis(basis_path)
        return fit_pca(dataset.X, d_z=d_z, gene_names=dataset.gene_names)

    def fit_basis(self, data_path: Path, out_path: Path, d_z: int = 5, centered: bool = False) -> CommandResult:
        started = time.monotonic()
        manifest = self._manifest("pca", [data_path], config={"d_z": d_z, "centered": centered})
        dataset = load_dataset(data_path)
        basis = fit_pca(dataset.X, d_z=d_z, centered=centered, gene_names=dataset.gene_names)
        result = CommandResult(outputs=[save_basis(basis, out_path)])
        return self._finish(manifest, started, out_path.parent, result)

    def synthesize(
        self,
        kind: Literal["linear", "spiral"],
        out_path: Path,
        seed: int = 0,
        n_per_time: int = 2000,
        grid: Sequence[float] = DEFAULT_GRID,
        d_x: int = 2,
        noise_sd: float = 0.0,
        damping: float = 0.0,
        operator: Optional[np.ndarray] = None,
    ) -> CommandResult:
        """Generate a fixture; linear fixtures also write the ground truth as JSON."""
        started = time.monotonic()
        streams = SeedStreams(seed)
        config = {"kind": kind, "n_per_time": n_per_time, "grid": list(grid), "d_x": d_x, "noise_sd": noise_sd}
        embed_seed, data_seed = streams.seed_sequence("synth").spawn(2)
        V = random_embedding(d_x, 2, embed_seed) if d_x != 2 else None
        outputs: List[Path] = []
        if kind == "linear":
            A_star = DEFAULT_LINEAR_OPERATOR if operator is None else np.asarray(operator, dtype=np.float64)
            config["operator"] = A_star.tolist()
            dataset, truth = synth_linear_snapshots(
                A_star,
                gaussian_sampler([1.0, 0.0], 0.1 * np.eye(A_star.shape[0])),
                grid,
                n_per_time,
                V_embed=V if A_star.shape[0] == 2 else None,
                noise_sd=noise_sd,
                seed=data_seed,
            )
            truth_path = out_path.with_suffix(".truth.json")
            truth_path.parent.mkdir(parents=True, exist_ok=True)
            truth_path.write_text(
                json.dumps(
                    {
                        "A_star": truth.A_star.tolist(),
                        "V_embed": truth.V_embed.tolist(),
                        "grid": list(truth.grid),
                        "noise_sd": truth.noise_sd,
                    },
                    indent=2,
                ),
                encoding="utf-8",
            )
            outputs.append(truth_path)
        else:
            config["damping"] = damping
            dataset = synth_spiral_snapshots(
                grid, n_per_time, seed=data_seed, damping=damping, V_embed=V, noise_sd=noise_sd
            )
        outputs.insert(0, save_dataset(dataset, out_path))
        manifest = self._manifest("synth", [], config=config, seeds={"master": seed})
        return self._finish(manifest, started, out_path.parent, CommandResult(outputs=outputs))

    def inflate(
        self,
        data_path: Path,
        basis_path: Path,
        out_path: Path,
        target_n: int,
        noise_sd: float = 0.1,
        seed: int = 0,
    ) -> CommandResult:
        started = time.monotonic()
        manifest = self._manifest(
            "inflate",
            [data_path, basis_path],
            config={"target_n": target_n, "noise_sd": noise_sd},
            seeds={"master": seed},
        )
        dataset = load_dataset(data_path)
        inflated = inflate_dataset(
            dataset, load_basis(basis_path), target_n, noise_sd, SeedStreams(seed).seed_sequence("inflate")
        )
        result = CommandResult(outputs=[save_dataset(inflated, out_path)])
        return self._finish(manifest, started, out_path.parent, result)

    def train(
        self,
        data_path: Path,
        out_dir: Path,
        config: Optional[TrainConfig] = None,
        basis_path: Optional[Path] = None,
        d_z: int = 5,
        leave_one_out_protocol: bool = False,
        callbacks: Optional[ExperimentCallbacks] = None,
    ) -> CommandResult:
        """Train one model, or one per interior grid time under leave-one-out."""
        started = time.monotonic()
        cfg = config or self.settings.train
        inputs = [data_path] + ([basis_path] if basis_path else [])
        manifest = self._manifest(
            "train",
            inputs,
            config={"train": cfg.model_dump(mode="json"), "leave_one_out": leave_one_out_protocol, "d_z": d_z},
            seeds={"master": cfg.seed},
        )
        dataset = load_dataset(data_path)
        basis = self._basis_for(dataset, basis_path, d_z)
        name = data_path.stem
        training_cb = callbacks.training if callbacks else None
        out_dir.mkdir(parents=True, exist_ok=True)
        self._stage(callbacks, "train_started")
        outputs: List[Path] = []
        if leave_one_out_protocol:
            checkpoints = leave_one_out(dataset, basis, cfg, out_dir, training_cb, name)
            for heldout, checkpoint in checkpoints.items():
                outputs.append(save_checkpoint(checkpoint, out_dir / f"checkpoint_heldout_{heldout:g}.json"))
        else:
            checkpoint = train_single(dataset, basis, cfg, out_dir / "train.jsonl", training_cb, name)
            outputs.append(save_checkpoint(checkpoint, out_dir / "checkpoint.json"))
        self._stage(callbacks, "train_completed")
        return self._finish(manifest, started, out_dir, CommandResult(outputs=outputs))

    def train_amortized(
        self,
        data_paths: Sequence[Path],
        out_dir: Path,
        config: Optional[TrainConfig] = None,
        basis_paths: Optional[Sequence[Path]] = None,
        d_z: int = 5,
        callbacks: Optional[ExperimentCallbacks] = None,
    ) -> CommandResult:
        """Train one conditioned model; ``train.amortized`` supplies the datasets when none are given."""
        started = time.monotonic()
        cfg = config or self.settings.train
        data_paths = list(data_paths) or [Path(path) for path in cfg.amortized]
        if not data_paths:
            raise ConfigurationError("no datasets given and train.amortized is empty")
        if basis_paths and len(basis_paths) != len(data_paths):
            raise ConfigurationError(f"{len(data_paths)} datasets but {len(basis_paths)} bases")
        inputs = list(data_paths) + list(basis_paths or [])
        names = [path.stem for path in data_paths]
        manifest = self._manifest(
            "train-amortized",
            inputs,
            config={"train": cfg.model_dump(mode="json"), "datasets": names, "d_z": d_z},
            seeds={"master": cfg.seed},
        )
        datasets = [load_dataset(path) for path in data_paths]
        bases = [
            self._basis_for(ds, basis_paths[k] if basis_paths else None, d_z) for k, ds in enumerate(datasets)
        ]
        out_dir.mkdir(parents=True, exist_ok=True)
        self._stage(callbacks, "train_started")
        checkpoint = train_amortized(
            datasets, bases, cfg, names, out_dir / "train.jsonl", callbacks.training if callbacks else None
        )
        self._stage(callbacks, "train_completed")
        result = CommandResult(outputs=[save_checkpoint(checkpoint, out_dir / "checkpoint.json")])
        return self._finish(manifest, started, out_dir, result)

    def evaluate(
        self,
        checkpoint_paths: Sequence[Path],
        data_path: Path,
        out_dir: Path,
        heldout: Optional[float] = None,
        dataset_index: Optional[int] = None,
        include_baselines: bool = True,
    ) -> CommandResult:
        """Score each checkpoint on its held-out marginal and write an EvalReport."""
        started = time.monotonic()
        eval_cfg = self.settings.evaluation
        manifest = self._manifest(
            "eval",
            list(checkpoint_paths) + [data_path],
            config={"evaluation": eval_cfg.model_dump(mode="json"), "heldout": heldout},
        )
        dataset = load_dataset(data_path)
        by_time: Dict[float, List[Checkpoint]] = {}
        for path in checkpoint_paths:
            checkpoint = load_checkpoint(path)
            t = checkpoint.heldout_time if checkpoint.heldout_time is not None else heldout
            if t is None:
                raise GridError(f"{path} was trained on every time; pass a held-out time to evaluate it")
            by_time.setdefault(t, []).append(checkpoint)
            manifest.seeds[str(path)] = checkpoint.seed

        report = EvalReport()
        name = data_path.stem
        # Checkpoints sharing a held-out time (seed ensembles) are scored one group at a time.
        depth = max(len(group) for group in by_time.values())
        for k in range(depth):
            layer = {t: group[k] for t, group in by_time.items() if k < len(group)}
            report.extend(
                evaluate_protocol(
                    layer,
                    dataset,
                    eval_cfg,
                    dataset_name=name,
                    dataset_index=dataset_index,
                    include_baselines=include_baselines and k == 0,
                    n_threads=self.n_threads,
                )
            )
        paths = report.write(out_dir)
        result = CommandResult(outputs=[paths["csv"], paths["json"]], details={"report": report})
        return self._finish(manifest, started, out_dir, result)

    def baseline(
        self,
        data_path: Path,
        out_dir: Path,
        heldout: Sequence[float] = (),
        methods: Sequence[str] = ("ot_interpolate", "persistence"),
        basis_path: Optional[Path] = None,
        d_z: int = 5,
        seed: int = 0,
    ) -> CommandResult:
        """Baseline scores for the given (default: every interior) held-out time."""
        started = time.monotonic()
        eval_cfg = self.settings.evaluation
        inputs = [data_path] + ([basis_path] if basis_path else [])
        manifest = self._manifest(
            "baseline",
            inputs,
            config={"evaluation": eval_cfg.model_dump(mode="json"), "methods": list(methods), "d_z": d_z},
            seeds={"master": seed},
        )
        dataset = load_dataset(data_path)
        basis = self._basis_for(dataset, basis_path, d_z)
        report = EvalReport()
        for t in heldout or dataset.grid.interior():
            report.entries.extend(
                score_baselines(
                    dataset,
                    t,
                    basis,
                    eval_cfg,
                    self.settings.train.loss,
                    seed=seed,
                    dataset_name=data_path.stem,
                    methods=methods,
                    n_threads=self.n_threads,
                )
            )
        paths = report.write(out_dir, stem="baseline_report")
        result = CommandResult(outputs=[paths["csv"], paths["json"]], details={"report": report})
        return self._finish(manifest, started, out_dir, result)

    def interactions(
        self,
        checkpoint_paths: Sequence[Path],
        data_path: Path,
        out_dir: Path,
        db_path: Optional[Path] = None,
        genes: Optional[Sequence[str]] = None,
        dataset_index: Optional[int] = None,
        seed: int = 0,
    ) -> CommandResult:
        """
        Aggregate interaction weights per checkpoint, rank the most active
        sources and, with a regulatory database, classify edge signs. Several
        checkpoints form an ensemble summarized as mean and std per gene.
        """
        started = time.monotonic()
        cfg = self.settings.interactions
        inputs = list(checkpoint_paths) + [data_path] + ([db_path] if db_path else [])
        manifest = self._manifest(
            "interactions",
            inputs,
            config={"interactions": cfg.model_dump(mode="json"), "genes": list(genes) if genes else None},
            seeds={"master": seed},
        )
        dataset = load_dataset(data_path)
        db = load_regulatory_db(db_path) if db_path else None
        aggregation_seed = SeedStreams(seed).child_seed("aggregation")
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs: List[Path] = []
        reports = []
        for k, path in enumerate(checkpoint_paths):
            checkpoint = load_checkpoint(path)
            idx = dataset_index if checkpoint.params.n_datasets > 0 else None
            aggregated = aggregate_weights(
                checkpoint.params,
                checkpoint.bases[dataset_index or 0],
                dataset,
                n_cells=cfg.n_cells,
                seed=aggregation_seed,
                genes=genes,
                idx=idx,
                chunk_size=cfg.chunk_size,
            )
            ranking = top_source_genes(aggregated, k=cfg.top_sources, signed=cfg.signed_activity)
            weights_path = out_dir / f"weights_{k}.csv"
            np.savetxt(
                weights_path,
                aggregated.mean,
                delimiter=",",
                header=",".join(aggregated.genes),
                comments="",
                fmt="%.17g",
            )
            ranking_path = out_dir / f"top_sources_{k}.json"
            ranking_path.write_text(
                json.dumps(
                    {
                        "per_time": {f"{t:g}": genes_ for t, genes_ in ranking.per_time.items()},
                        "overall": ranking.overall,
                        "union": ranking.union(),
                    },
                    indent=2,
                ),
                encoding="utf-8",
            )
            outputs.extend([weights_path, ranking_path])
            if db is not None:
                report = classify_edges(aggregated, db, ranking.union(), min_edges=cfg.min_edges)
                report.seeds = [checkpoint.seed]
                paths = report.write(out_dir, stem=f"interactions_{k}")
                outputs.extend([paths["csv"], paths["json"]])
                reports.append(report)
        if len(reports) > 1:
            summary_path = out_dir / "interactions_ensemble.csv"
            summarize_ensemble(reports).to_csv(summary_path, index=False)
            outputs.append(summary_path)
        result = CommandResult(outputs=outputs, details={"reports": reports})
        return self._finish(manifest, started, out_dir, result)

    def export_operators(
        self,
        checkpoint_path: Path,
        data_path: Path,
        out_path: Path,
        n_cells: int = 10_000,
        markers: Sequence[str] = (),
        dataset_index: Optional[int] = None,
        seed: int = 0,
    ) -> CommandResult:
        started = time.monotonic()
        manifest = self._manifest(
            "export-operators",
            [checkpoint_path, data_path],
            config={"n_cells": n_cells, "markers": list(markers)},
            seeds={"master": seed},
        )
        checkpoint = load_checkpoint(checkpoint_path)
        dataset = load_dataset(data_path)
        path = export_operators(
            checkpoint.params,
            checkpoint.bases[dataset_index or 0],
            dataset,
            n_cells,
            out_path,
            seed=SeedStreams(seed).child_seed("aggregation"),
            markers=markers,
            idx=dataset_index if checkpoint.params.n_datasets > 0 else None,
        )
        return self._finish(manifest, started, out_path.parent, CommandResult(outputs=[path]))
