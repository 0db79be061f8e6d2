"""
Command line interface for snapshot dynamics experiments.
"""

from __future__ import annotations

import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

import click
import typer
from rich.console import Console
from rich.progress import (
    BarColumn,
    Progress,
    TaskProgressColumn,
    TextColumn,
    TimeElapsedColumn,
)

from .config import EncoderConfig, LossConfig, TrainConfig
from .errors import SnaplinError
from .evaluation import METHOD_OT_INTERPOLATE, METHOD_PERSISTENCE
from .logger import configure_logging, get_logger, redirect_logging_to_file
from .services import ExperimentCallbacks, ExperimentService
from .settings import AppSettings, load_settings, settings
from .training import TrainingCallbacks
from .version import get_version

app = typer.Typer(name="snaplin", help="Locally-linear latent dynamics from snapshot data.")
configure_logging(enable_console=False)
log = get_logger(__name__)
console = Console()

BASELINE_METHODS = {"ot-interpolate": METHOD_OT_INTERPOLATE, "persistence": METHOD_PERSISTENCE}

_TRAIN = TrainConfig.model_fields
_LOSS = LossConfig.model_fields
_ENCODER = EncoderConfig.model_fields


@dataclass
class _State:
    settings: AppSettings


_state = _State(settings=settings)


def _default(fields: Dict[str, Any], name: str) -> str:
    return f"[table default: {fields[name].default}]"


def _csv_floats(raw: Optional[str]) -> Optional[List[float]]:
    if raw is None:
        return None
    try:
        return [float(value) for value in raw.split(",") if value.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected comma-separated numbers, got '{raw}'")


def _csv_names(raw: Optional[str]) -> Optional[List[str]]:
    if raw is None:
        return None
    return [name.strip() for name in raw.split(",") if name.strip()]


@contextmanager
def _reported_errors() -> Iterator[None]:
    try:
        yield
    except SnaplinError as exc:
        log.error("command_failed", error=type(exc).__name__, detail=str(exc))
        typer.echo(f"[ERROR] {exc}", err=True)
        raise typer.Exit(code=1)
    except FileNotFoundError as exc:
        typer.echo(f"[ERROR] {exc}", err=True)
        raise typer.Exit(code=1)


def _service() -> ExperimentService:
    return ExperimentService(_state.settings)


def _report_outputs(outputs: Sequence[Path], manifest: Optional[Path]) -> None:
    for path in outputs:
        typer.echo(f"wrote {path}")
    if manifest is not None:
        typer.echo(f"manifest {manifest}")


def _train_config(
    seed: Optional[int],
    heldout: Optional[float],
    lr: Optional[float],
    weight_decay: Optional[float],
    batch: Optional[int],
    max_steps: Optional[int],
    val_every: Optional[int],
    patience: Optional[int],
    max_minutes: Optional[float],
    clip_grad_norm: Optional[float],
    depth: Optional[int],
    width: Optional[int],
    zero_mask: Optional[str],
    normalize_time: Optional[bool],
    sigma: Optional[float],
    gamma: Optional[float],
    lambda_kin: Optional[float],
    lambda_inv: Optional[float],
    discount: Optional[str],
    sources_per_step: Optional[int],
) -> TrainConfig:
    """Apply explicit flags on top of the configured TrainConfig."""

    def given(**values: Any) -> Dict[str, Any]:
        return {key: value for key, value in values.items() if value is not None}

    base = _state.settings.train.model_dump()
    base.update(
        given(
            seed=seed,
            heldout_time=heldout,
            lr=lr,
            weight_decay=weight_decay,
            batch_per_time=batch,
            max_steps=max_steps,
            val_every=val_every,
            patience=patience,
            max_minutes=max_minutes,
            clip_grad_norm=clip_grad_norm,
        )
    )
    mask = None
    if zero_mask is not None:
        mask = tuple(int(index) for index in zero_mask.split(",") if index.strip())
    base["encoder"].update(given(depth=depth, width=width, zero_mask=mask, normalize_time=normalize_time))
    base["loss"].update(
        given(
            sigma=sigma,
            gamma=gamma,
            lambda_kin=lambda_kin,
            lambda_inv=lambda_inv,
            discount=discount,
            sources_per_step=sources_per_step,
        )
    )
    try:
        return TrainConfig.model_validate(base)
    except ValueError as exc:
        raise typer.BadParameter(str(exc))


@contextmanager
def _training_progress(max_steps: int) -> Iterator[ExperimentCallbacks]:
    with Progress(
        TextColumn("{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task("Training", total=max(max_steps, 1))

        def on_step(step: int, total: int) -> None:
            progress.update(task, completed=step, total=max(total, 1))

        def on_validation(step: int, score: float, improved: bool) -> None:
            marker = "*" if improved else ""
            progress.update(task, description=f"Training (val {score:.4g}{marker})")

        def on_stage(stage: str) -> None:
            if stage == "training_started":
                progress.reset(task, description="Training")
            elif stage == "training_finished":
                task_state = progress.tasks[task]
                progress.update(
                    task,
                    completed=task_state.total if task_state.total is not None else task_state.completed,
                    description="Training complete",
                )

        yield ExperimentCallbacks(
            training=TrainingCallbacks(step=on_step, validation=on_validation, stage=on_stage)
        )


@app.callback()
def main_options(
    config: Optional[Path] = typer.Option(
        None, "--config", help="TOML settings file (overrides defaults, overridden by flags)."
    ),
    deterministic: Optional[bool] = typer.Option(
        None,
        "--deterministic/--no-deterministic",
        help="Bitwise-reproducible mode: single-threaded fixed-order reductions.",
    ),
    threads: Optional[int] = typer.Option(
        None, "--threads", min=1, help="Worker threads for Gram and cost matrices (SNAPLIN_N_THREADS)."
    ),
    log_file: Optional[Path] = typer.Option(
        None, "--log", help="Redirect detailed logs to this file."
    ),
) -> None:
    """Global options shared by every command."""
    loaded = settings
    if config is not None:
        if not config.is_file():
            typer.echo(f"[ERROR] Config file not found: {config}", err=True)
            raise typer.Exit(code=2)
        loaded = load_settings(config)
    updates: Dict[str, Any] = {}
    if deterministic is not None:
        updates["deterministic"] = deterministic
    if threads is not None:
        updates["n_threads"] = threads
    _state.settings = loaded.model_copy(update=updates) if updates else loaded
    level = _state.settings.log_level_number()
    configure_logging(level=level, enable_console=False)
    if log_file is not None:
        redirect_logging_to_file(log_file.resolve(), level)
        typer.echo(f"Logging detailed output to {log_file.resolve()}")


@app.command()
def version() -> None:
    """Display the installed snaplin version."""

    typer.echo(f"snaplin {get_version()}")


@app.command()
def pca(
    data: Path = typer.Argument(..., help="Snapshot CSV/TSV with a leading 'time' column."),
    out: Path = typer.Option(..., "--out", "-o", help="Destination of the basis file."),
    d_z: int = typer.Option(5, "--dz", min=1, help="Number of principal components."),
    centered: bool = typer.Option(False, "--centered", help="Subtract the gene means (affine mode)."),
) -> None:
    """Fit and save a PCA basis."""
    with _reported_errors():
        result = _service().fit_basis(data, out, d_z=d_z, centered=centered)
    _report_outputs(result.outputs, result.manifest_path)


@app.command()
def synth(
    kind: str = typer.Option("linear", "--kind", help="Fixture kind: linear or spiral."),
    out: Path = typer.Option(Path("synth.csv"), "--out", "-o", help="Destination CSV."),
    seed: int = typer.Option(0, "--seed", help="Master seed."),
    n_per_time: int = typer.Option(2000, "--n-per-time", min=1, help="Samples per grid time."),
    grid: str = typer.Option("0,1,2", "--grid", help="Comma-separated grid times."),
    d_x: int = typer.Option(2, "--dx", min=2, help="Observation dimension (random orthonormal embedding)."),
    noise_sd: float = typer.Option(0.0, "--noise-sd", min=0.0, help="Observation noise sd."),
    damping: float = typer.Option(0.0, "--damping", min=0.0, help="Spiral damping (0 preserves radius)."),
) -> None:
    """Generate a synthetic snapshot fixture."""
    if kind not in ("linear", "spiral"):
        raise typer.BadParameter(f"unknown kind '{kind}'; expected linear or spiral", param_hint="--kind")
    with _reported_errors():
        result = _service().synthesize(
            kind,  # type: ignore[arg-type]
            out,
            seed=seed,
            n_per_time=n_per_time,
            grid=_csv_floats(grid) or [],
            d_x=d_x,
            noise_sd=noise_sd,
            damping=damping,
        )
    _report_outputs(result.outputs, result.manifest_path)


@app.command()
def inflate(
    data: Path = typer.Argument(..., help="Dataset to inflate."),
    basis: Path = typer.Option(..., "--basis", help="PCA basis whose latent space receives the noise."),
    out: Path = typer.Option(..., "--out", "-o", help="Destination CSV."),
    target_n: int = typer.Option(250_000, "--target-n", min=1, help="Total rows after inflation."),
    noise_sd: float = typer.Option(0.1, "--noise-sd", min=0.0, help="Latent noise sd."),
    seed: int = typer.Option(0, "--seed", help="Master seed."),
) -> None:
    """Resample a dataset to a larger size with latent noise."""
    with _reported_errors():
        result = _service().inflate(data, basis, out, target_n, noise_sd=noise_sd, seed=seed)
    _report_outputs(result.outputs, result.manifest_path)


_SEED = typer.Option(None, "--seed", help=f"Master seed. {_default(_TRAIN, 'seed')}")
_LR = typer.Option(None, "--lr", help=f"AdamW learning rate. {_default(_TRAIN, 'lr')}")
_WD = typer.Option(None, "--weight-decay", help=f"AdamW weight decay. {_default(_TRAIN, 'weight_decay')}")
_BATCH = typer.Option(None, "--batch", help=f"Samples per time per step. {_default(_TRAIN, 'batch_per_time')}")
_STEPS = typer.Option(None, "--max-steps", help=f"Step limit. {_default(_TRAIN, 'max_steps')}")
_VAL = typer.Option(None, "--val-every", help=f"Validation stride. {_default(_TRAIN, 'val_every')}")
_PATIENCE = typer.Option(None, "--patience", help=f"Validations without improvement. {_default(_TRAIN, 'patience')}")
_MINUTES = typer.Option(None, "--max-minutes", help=f"Wall-clock budget. {_default(_TRAIN, 'max_minutes')}")
_CLIP = typer.Option(None, "--clip-grad-norm", help="Global gradient-norm clip (off by default).")
_DEPTH = typer.Option(None, "--depth", help=f"Hidden layers. {_default(_ENCODER, 'depth')}")
_WIDTH = typer.Option(None, "--width", help=f"Hidden width. {_default(_ENCODER, 'width')}")
_MASK = typer.Option(None, "--zero-mask", help="Comma-separated eigenvalue indices pinned to zero.")
_NORM_T = typer.Option(None, "--normalize-time/--raw-time", help="Scale time inputs by 1/max|t|.")
_SIGMA = typer.Option(None, "--sigma", help=f"Kernel bandwidth. {_default(_LOSS, 'sigma')}")
_GAMMA = typer.Option(None, "--gamma", help=f"Future discount. {_default(_LOSS, 'gamma')}")
_KIN = typer.Option(None, "--lambda-kin", help=f"Kinetic weight. {_default(_LOSS, 'lambda_kin')}")
_INV = typer.Option(None, "--lambda-inv", help=f"Invertibility weight. {_default(_LOSS, 'lambda_inv')}")
_DISCOUNT = typer.Option(None, "--discount", help=f"absolute or lag. {_default(_LOSS, 'discount')}")
_SOURCES = typer.Option(None, "--sources-per-step", help="Subsample source times per step (all by default).")


@app.command()
def train(
    data: Path = typer.Argument(..., help="Snapshot dataset."),
    out: Path = typer.Option(Path("runs/train"), "--out", "-o", help="Output directory."),
    basis: Optional[Path] = typer.Option(None, "--basis", help="PCA basis (fitted on the data if omitted)."),
    d_z: int = typer.Option(5, "--dz", min=1, help="Latent dimension when fitting a basis."),
    leave_one_out: bool = typer.Option(False, "--leave-one-out", help="Train one model per interior grid time."),
    heldout: Optional[float] = typer.Option(None, "--heldout", help="Grid time excluded from training."),
    seed: Optional[int] = _SEED,
    lr: Optional[float] = _LR,
    weight_decay: Optional[float] = _WD,
    batch: Optional[int] = _BATCH,
    max_steps: Optional[int] = _STEPS,
    val_every: Optional[int] = _VAL,
    patience: Optional[int] = _PATIENCE,
    max_minutes: Optional[float] = _MINUTES,
    clip_grad_norm: Optional[float] = _CLIP,
    depth: Optional[int] = _DEPTH,
    width: Optional[int] = _WIDTH,
    zero_mask: Optional[str] = _MASK,
    normalize_time: Optional[bool] = _NORM_T,
    sigma: Optional[float] = _SIGMA,
    gamma: Optional[float] = _GAMMA,
    lambda_kin: Optional[float] = _KIN,
    lambda_inv: Optional[float] = _INV,
    discount: Optional[str] = _DISCOUNT,
    sources_per_step: Optional[int] = _SOURCES,
) -> None:
    """Train a model on one dataset, optionally under leave-one-timepoint-out."""
    cfg = _train_config(
        seed, heldout, lr, weight_decay, batch, max_steps, val_every, patience, max_minutes, clip_grad_norm,
        depth, width, zero_mask, normalize_time, sigma, gamma, lambda_kin, lambda_inv, discount, sources_per_step,
    )
    with _reported_errors(), _training_progress(cfg.max_steps) as callbacks:
        result = _service().train(
            data, out, cfg, basis_path=basis, d_z=d_z, leave_one_out_protocol=leave_one_out, callbacks=callbacks
        )
    _report_outputs(result.outputs, result.manifest_path)


@app.command("train-amortized")
def train_amortized(
    data: Optional[List[Path]] = typer.Argument(
        None, help="Snapshot datasets; defaults to train.amortized from the settings."
    ),
    out: Path = typer.Option(Path("runs/amortized"), "--out", "-o", help="Output directory."),
    basis: Optional[List[Path]] = typer.Option(None, "--basis", help="One PCA basis per dataset, in order."),
    d_z: int = typer.Option(5, "--dz", min=1, help="Latent dimension when fitting bases."),
    heldout: Optional[float] = typer.Option(None, "--heldout", help="Grid time excluded wherever present."),
    seed: Optional[int] = _SEED,
    lr: Optional[float] = _LR,
    weight_decay: Optional[float] = _WD,
    batch: Optional[int] = _BATCH,
    max_steps: Optional[int] = _STEPS,
    val_every: Optional[int] = _VAL,
    patience: Optional[int] = _PATIENCE,
    max_minutes: Optional[float] = _MINUTES,
    clip_grad_norm: Optional[float] = _CLIP,
    depth: Optional[int] = _DEPTH,
    width: Optional[int] = _WIDTH,
    zero_mask: Optional[str] = _MASK,
    normalize_time: Optional[bool] = _NORM_T,
    sigma: Optional[float] = _SIGMA,
    gamma: Optional[float] = _GAMMA,
    lambda_kin: Optional[float] = _KIN,
    lambda_inv: Optional[float] = _INV,
    discount: Optional[str] = _DISCOUNT,
    sources_per_step: Optional[int] = _SOURCES,
) -> None:
    """Train one dataset-conditioned model across several datasets."""
    cfg = _train_config(
        seed, heldout, lr, weight_decay, batch, max_steps, val_every, patience, max_minutes, clip_grad_norm,
        depth, width, zero_mask, normalize_time, sigma, gamma, lambda_kin, lambda_inv, discount, sources_per_step,
    )
    with _reported_errors(), _training_progress(cfg.max_steps) as callbacks:
        result = _service().train_amortized(
            data or [], out, cfg, basis_paths=basis or None, d_z=d_z, callbacks=callbacks
        )
    _report_outputs(result.outputs, result.manifest_path)


def _eval_settings(mode: Optional[str], source: Optional[str], mmd_batch: Optional[int]) -> None:
    updates = {
        key: value
        for key, value in {"mode": mode, "source": source, "mmd_batch_size": mmd_batch}.items()
        if value is not None
    }
    if updates:
        evaluation = _state.settings.evaluation.model_dump()
        evaluation.update(updates)
        try:
            validated = type(_state.settings.evaluation).model_validate(evaluation)
        except ValueError as exc:
            raise typer.BadParameter(str(exc))
        _state.settings = _state.settings.model_copy(update={"evaluation": validated})


@app.command("eval")
def evaluate(
    checkpoint: List[Path] = typer.Option(..., "--checkpoint", "-c", help="Checkpoint file(s) to score."),
    data: Path = typer.Option(..., "--data", help="Dataset holding the held-out marginals."),
    out: Path = typer.Option(Path("runs/eval"), "--out", "-o", help="Output directory."),
    heldout: Optional[float] = typer.Option(None, "--heldout", help="Held-out time for checkpoints trained on all times."),
    dataset_index: Optional[int] = typer.Option(None, "--dataset-index", help="Index of the dataset in an amortized model."),
    mode: Optional[str] = typer.Option(None, "--mode", help="emd or mmd [default: emd]."),
    source: Optional[str] = typer.Option(None, "--source", help="previous or initial [default: previous]."),
    mmd_batch: Optional[int] = typer.Option(None, "--mmd-batch", help="Batch size for the batch-wise MMD metric."),
    no_baselines: bool = typer.Option(False, "--no-baselines", help="Skip OT-Interpolate and persistence."),
) -> None:
    """Score checkpoints on held-out marginals against the baselines."""
    _eval_settings(mode, source, mmd_batch)
    with _reported_errors():
        result = _service().evaluate(
            checkpoint, data, out, heldout=heldout, dataset_index=dataset_index, include_baselines=not no_baselines
        )
    _report_outputs(result.outputs, result.manifest_path)


@app.command()
def baseline(
    data: Path = typer.Argument(..., help="Snapshot dataset."),
    out: Path = typer.Option(Path("runs/baseline"), "--out", "-o", help="Output directory."),
    method: Optional[List[str]] = typer.Option(None, "--method", help="ot-interpolate and/or persistence [default: both]."),
    heldout: Optional[List[float]] = typer.Option(None, "--heldout", help="Held-out time(s) [default: every interior time]."),
    basis: Optional[Path] = typer.Option(None, "--basis", help="PCA basis (fitted on the data if omitted)."),
    d_z: int = typer.Option(5, "--dz", min=1, help="Latent dimension when fitting a basis."),
    mode: Optional[str] = typer.Option(None, "--mode", help="emd or mmd [default: emd]."),
    seed: int = typer.Option(0, "--seed", help="Seed for sampling-based scoring."),
) -> None:
    """Score the non-learned baselines on held-out marginals."""
    names = method or list(BASELINE_METHODS)
    unknown = [name for name in names if name not in BASELINE_METHODS]
    if unknown:
        raise typer.BadParameter(
            f"unknown method(s) {', '.join(unknown)}; expected {', '.join(BASELINE_METHODS)}", param_hint="--method"
        )
    _eval_settings(mode, None, None)
    with _reported_errors():
        result = _service().baseline(
            data,
            out,
            heldout=heldout or (),
            methods=[BASELINE_METHODS[name] for name in names],
            basis_path=basis,
            d_z=d_z,
            seed=seed,
        )
    _report_outputs(result.outputs, result.manifest_path)


@app.command()
def interactions(
    checkpoint: List[Path] = typer.Option(..., "--checkpoint", "-c", help="Checkpoint(s); several form an ensemble."),
    data: Path = typer.Option(..., "--data", help="Dataset whose cells are sampled."),
    out: Path = typer.Option(Path("runs/interactions"), "--out", "-o", help="Output directory."),
    db: Optional[Path] = typer.Option(None, "--db", help="Regulatory database TSV (source, target, mode, refs)."),
    genes: Optional[str] = typer.Option(None, "--genes", help="Comma-separated gene subset."),
    n_cells: Optional[int] = typer.Option(None, "--n-cells", help="Cells averaged over [default: 10000]."),
    min_edges: Optional[int] = typer.Option(None, "--min-edges", help="Edges a source needs to qualify [default: 10]."),
    top_sources: Optional[int] = typer.Option(None, "--top-sources", help="Top sources per time range [default: 10]."),
    signed: Optional[bool] = typer.Option(None, "--signed/--absolute", help="Rank sources by signed weight sums."),
    dataset_index: Optional[int] = typer.Option(None, "--dataset-index", help="Index of the dataset in an amortized model."),
    seed: int = typer.Option(0, "--seed", help="Master seed for cell sampling."),
) -> None:
    """Aggregate interaction weights, rank sources and classify edge signs."""
    updates = {
        key: value
        for key, value in {
            "n_cells": n_cells,
            "min_edges": min_edges,
            "top_sources": top_sources,
            "signed_activity": signed,
        }.items()
        if value is not None
    }
    if updates:
        merged = {**_state.settings.interactions.model_dump(), **updates}
        try:
            validated = type(_state.settings.interactions).model_validate(merged)
        except ValueError as exc:
            raise typer.BadParameter(str(exc))
        _state.settings = _state.settings.model_copy(update={"interactions": validated})
    with _reported_errors():
        result = _service().interactions(
            checkpoint, data, out, db_path=db, genes=_csv_names(genes), dataset_index=dataset_index, seed=seed
        )
    _report_outputs(result.outputs, result.manifest_path)


@app.command("export-operators")
def export_operators(
    checkpoint: Path = typer.Option(..., "--checkpoint", "-c", help="Checkpoint file."),
    data: Path = typer.Option(..., "--data", help="Dataset whose cells are sampled."),
    out: Path = typer.Option(Path("runs/operators.csv"), "--out", "-o", help="Destination CSV."),
    n_cells: int = typer.Option(10_000, "--n-cells", min=1, help="Cells exported."),
    markers: Optional[str] = typer.Option(None, "--markers", help="Comma-separated marker genes appended as columns."),
    dataset_index: Optional[int] = typer.Option(None, "--dataset-index", help="Index of the dataset in an amortized model."),
    seed: int = typer.Option(0, "--seed", help="Master seed for cell sampling."),
) -> None:
    """Export per-cell assembled operators to CSV."""
    with _reported_errors():
        result = _service().export_operators(
            checkpoint,
            data,
            out,
            n_cells=n_cells,
            markers=_csv_names(markers) or (),
            dataset_index=dataset_index,
            seed=seed,
        )
    _report_outputs(result.outputs, result.manifest_path)


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI on ``argv`` and return the process exit code."""
    try:
        result = app(args=list(argv) if argv is not None else None, prog_name="snaplin", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        typer.echo("Aborted.", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except SnaplinError as exc:
        typer.echo(f"[ERROR] {exc}", err=True)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:  # pragma: no cover
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":  # pragma: no cover
    main()
