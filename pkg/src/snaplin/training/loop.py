"""
Optimization loop, leave-one-timepoint-out protocol and amortized training.

All randomness comes from named substreams of ``config.seed``: ``init`` for
the weights, ``batch`` for training draws and ``validation`` for the fixed
early-stopping batches, which are drawn once and never touch the held-out
marginal.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import TrainConfig
from ..data.dataset import SnapshotDataset
from ..data.pca import PcaBasis, project
from ..data.sampling import BatchSampler
from ..diffcore import Value, backward
from ..encoder.network import BoundEncoder
from ..encoder.params import EncoderParams, init_params
from ..errors import DimensionMismatchError, GridError, TrainingDivergedError
from ..linop import Propagator
from ..logger import close_run_log, get_logger, open_run_log
from ..losses import draw_batch_spec, mmd2, total_loss
from ..seeding import SeedStreams
from .checkpoint import Checkpoint
from .optim import AdamWState, adamw_step, clip_by_global_norm

log = get_logger(__name__)


@dataclass
class TrainingCallbacks:
    step: Optional[Callable[[int, int], None]] = None
    validation: Optional[Callable[[int, float, bool], None]] = None
    stage: Optional[Callable[[str], None]] = None


@dataclass(frozen=True, eq=False)
class ValidationPair:
    source_t: float
    target_t: float
    source: np.ndarray
    target: np.ndarray


def _latent_marginals(
    dataset: SnapshotDataset, basis: PcaBasis, heldout: Optional[float]
) -> Dict[float, np.ndarray]:
    if basis.d_x != dataset.d_x:
        raise DimensionMismatchError(f"basis d_x {basis.d_x} != dataset d_x {dataset.d_x}")
    return {t: project(basis, dataset.marginal(t)) for t in dataset.grid.without(heldout)}


def validation_pairs(
    marginals: Dict[float, np.ndarray], batch_size: int, seed: np.random.SeedSequence
) -> List[ValidationPair]:
    """Fixed batches for each usable time and its immediate usable successor."""
    rng = np.random.default_rng(seed)
    times = sorted(marginals)
    pairs = []
    for source_t, target_t in zip(times[:-1], times[1:]):
        src, tgt = marginals[source_t], marginals[target_t]
        pairs.append(
            ValidationPair(
                source_t=source_t,
                target_t=target_t,
                source=src[rng.integers(0, src.shape[0], size=batch_size)],
                target=tgt[rng.integers(0, tgt.shape[0], size=batch_size)],
            )
        )
    return pairs


def validation_score_of(
    params: EncoderParams, pairs: Sequence[ValidationPair], config: TrainConfig, dataset_index: Optional[int]
) -> float:
    """Mean MMD between pushed validation sources and their successor batches."""
    encoder = BoundEncoder(params, requires_grad=False)
    scores = []
    for pair in pairs:
        z = Value(pair.source)
        P, lam = encoder(z, np.full(z.shape[0], pair.source_t), dataset_index)
        pushed = Propagator(P, lam, z).at(pair.target_t - pair.source_t)
        scores.append(float(mmd2(pushed, Value(pair.target), config.loss.sigma, config.loss.eps_kernel).data))
    return float(np.mean(scores))


def _time_scale(config: TrainConfig, grids: Sequence[Tuple[float, ...]]) -> float:
    if not config.encoder.normalize_time:
        return 1.0
    largest = max(abs(t) for grid in grids for t in grid)
    return 1.0 / largest if largest > 0 else 1.0


class Trainer:
    """
    Minimizes the total loss over one or more datasets.

    Datasets are visited round-robin, one per step; with more than one
    dataset the encoder is conditioned on the one-hot dataset index.
    """

    def __init__(
        self,
        datasets: Sequence[SnapshotDataset],
        bases: Sequence[PcaBasis],
        config: TrainConfig,
        dataset_names: Optional[Sequence[str]] = None,
        run_log: Optional[Path] = None,
        callbacks: Optional[TrainingCallbacks] = None,
        conditioned: Optional[bool] = None,
    ) -> None:
        if not datasets:
            raise ValueError("at least one dataset is required")
        if len(datasets) != len(bases):
            raise DimensionMismatchError(f"{len(datasets)} datasets but {len(bases)} bases")
        d_z = {basis.d_z for basis in bases}
        if len(d_z) != 1:
            raise DimensionMismatchError(f"datasets disagree on the latent dimension: {sorted(d_z)}")
        self.datasets = list(datasets)
        self.bases = list(bases)
        self.config = config
        self.d_z = d_z.pop()
        self.names = list(dataset_names) if dataset_names else [f"dataset{i}" for i in range(len(datasets))]
        self.run_log_path = run_log
        self.callbacks = callbacks or TrainingCallbacks()
        self.conditioned = len(datasets) > 1 if conditioned is None else conditioned
        self.streams = SeedStreams(config.seed)

        heldout = config.heldout_time
        if heldout is not None and not any(heldout in ds.grid for ds in self.datasets):
            raise GridError(f"held-out time {heldout} is not on any dataset grid")
        self.marginals = [
            _latent_marginals(ds, basis, heldout if heldout in ds.grid else None)
            for ds, basis in zip(self.datasets, self.bases)
        ]
        for name, marginals in zip(self.names, self.marginals):
            if len(marginals) < 2:
                raise GridError(f"{name}: fewer than 2 usable times after holding out {heldout}")
        batch_rng = self.streams.generator("batch")
        self.samplers = [BatchSampler(m, batch_rng) for m in self.marginals]
        validation_seeds = self.streams.seed_sequence("validation").spawn(len(self.datasets))
        self.validation = [
            validation_pairs(m, config.batch_per_time, seed)
            for m, seed in zip(self.marginals, validation_seeds)
        ]

    def dataset_index(self, k: int) -> Optional[int]:
        return k if self.conditioned else None

    def initial_params(self) -> EncoderParams:
        enc = self.config.encoder
        return init_params(
            depth=enc.depth,
            width=enc.width,
            d_z=self.d_z,
            n_datasets=len(self.datasets) if self.conditioned else 0,
            seed=self.streams.seed_sequence("init"),
            zero_mask=enc.zero_mask,
            out_scale=enc.out_scale,
            negative_slope=enc.negative_slope,
            time_scale=_time_scale(self.config, [ds.grid.values for ds in self.datasets]),
        )

    def validate(self, params: EncoderParams) -> List[float]:
        return [
            validation_score_of(params, pairs, self.config, self.dataset_index(k))
            for k, pairs in enumerate(self.validation)
        ]

    def run(self) -> Checkpoint:
        cfg = self.config
        params = self.initial_params()
        state = AdamWState.zeros_like(params.arrays())
        run_log = open_run_log(self.run_log_path) if self.run_log_path else None
        start = time.monotonic()
        budget = cfg.max_minutes * 60.0

        best_params, best_score, best_step = params, math.inf, 0
        best_scores: List[float] = [math.inf] * len(self.datasets)
        stale = 0
        step = 0
        stop_reason = "max_steps"
        if self.callbacks.stage:
            self.callbacks.stage("training_started")
        log.info(
            "training_started",
            datasets=self.names,
            heldout=cfg.heldout_time,
            parameters=params.n_parameters(),
            config_hash=cfg.config_hash(),
        )
        try:
            while step < cfg.max_steps:
                k = step % len(self.datasets)
                encoder = BoundEncoder(params, requires_grad=True)
                spec = draw_batch_spec(self.samplers[k], cfg.batch_per_time, cfg.loss, self.dataset_index(k))
                try:
                    breakdown = total_loss(encoder, spec, cfg.loss)
                    components = breakdown.components()
                    if not all(math.isfinite(value) for value in components.values()):
                        raise TrainingDivergedError(step, components, breakdown.det_stats())
                    backward(breakdown.total)
                except np.linalg.LinAlgError as exc:
                    log.error("singular_basis", step=step, dataset=self.names[k], detail=str(exc))
                    raise TrainingDivergedError(step, {}, {}, reason=f"singular basis P ({exc})") from exc
                grads, grad_norm = clip_by_global_norm(encoder.grads(), cfg.clip_grad_norm)
                new_arrays, state = adamw_step(
                    params.arrays(),
                    grads,
                    state,
                    lr=cfg.lr,
                    betas=cfg.betas,
                    eps=cfg.adam_eps,
                    weight_decay=cfg.weight_decay,
                )
                params = params.with_arrays(new_arrays)
                step += 1
                elapsed = time.monotonic() - start
                record = dict(step=step, dataset=self.names[k], grad_norm=grad_norm, wall_clock=elapsed, **components)

                if step % cfg.val_every == 0:
                    scores = self.validate(params)
                    score = float(np.mean(scores))
                    improved = score < best_score
                    if improved:
                        best_params, best_score, best_step, best_scores = params, score, step, scores
                        stale = 0
                        log.debug("validation_improved", step=step, score=score)
                    else:
                        stale += 1
                    record["val_score"] = score
                    if self.callbacks.validation:
                        self.callbacks.validation(step, score, improved)
                if run_log is not None:
                    run_log.info("train_step", **record)
                if self.callbacks.step:
                    self.callbacks.step(step, cfg.max_steps)
                if stale >= cfg.patience:
                    stop_reason = "patience"
                    break
                if elapsed >= budget:
                    stop_reason = "wall_clock"
                    break
        finally:
            if run_log is not None and self.run_log_path is not None:
                close_run_log(self.run_log_path)

        if best_step == 0:
            # No validation happened yet; score the final parameters once.
            best_scores = self.validate(params)
            best_params, best_score, best_step = params, float(np.mean(best_scores)), step
        wall_clock = time.monotonic() - start
        log.info(
            "training_finished",
            reason=stop_reason,
            steps=step,
            best_step=best_step,
            best_score=best_score,
            wall_clock=wall_clock,
        )
        if self.callbacks.stage:
            self.callbacks.stage("training_finished")
        return Checkpoint(
            params=best_params,
            bases=self.bases,
            config=cfg,
            step=best_step,
            best_score=best_score,
            wall_clock=wall_clock,
            grids=[ds.grid.values for ds in self.datasets],
            dataset_names=self.names,
            dataset_scores=list(best_scores),
        )


def train_single(
    dataset: SnapshotDataset,
    basis: PcaBasis,
    config: TrainConfig,
    run_log: Optional[Path] = None,
    callbacks: Optional[TrainingCallbacks] = None,
    name: str = "dataset0",
) -> Checkpoint:
    if config.heldout_time is not None and config.heldout_time not in dataset.grid:
        raise GridError(f"held-out time {config.heldout_time} is not on the grid {list(dataset.grid)}")
    return Trainer([dataset], [basis], config, [name], run_log, callbacks).run()


def leave_one_out(
    dataset: SnapshotDataset,
    basis: PcaBasis,
    config: TrainConfig,
    run_log_dir: Optional[Path] = None,
    callbacks: Optional[TrainingCallbacks] = None,
    name: str = "dataset0",
) -> Dict[float, Checkpoint]:
    """One model per interior grid time, each trained without that marginal."""
    interior = dataset.grid.interior()
    if not interior:
        raise GridError(f"leave-one-out needs at least 3 grid times, got {list(dataset.grid)}")
    checkpoints: Dict[float, Checkpoint] = {}
    for heldout in interior:
        log.info("leave_one_out_fold", heldout=heldout)
        run_log = run_log_dir / f"train_heldout_{heldout:g}.jsonl" if run_log_dir else None
        fold = config.model_copy(update={"heldout_time": heldout})
        checkpoints[heldout] = train_single(dataset, basis, fold, run_log, callbacks, name)
    return checkpoints


def train_amortized(
    datasets: Sequence[SnapshotDataset],
    bases: Sequence[PcaBasis],
    config: TrainConfig,
    dataset_names: Optional[Sequence[str]] = None,
    run_log: Optional[Path] = None,
    callbacks: Optional[TrainingCallbacks] = None,
) -> Checkpoint:
    """One encoder conditioned on a one-hot dataset index, datasets interleaved round-robin."""
    return Trainer(datasets, bases, config, dataset_names, run_log, callbacks, conditioned=True).run()


def validation_score(checkpoint: Checkpoint, datasets: Sequence[SnapshotDataset]) -> float:
    """Recompute the early-stopping score of ``checkpoint`` from its seed."""
    trainer = Trainer(
        datasets,
        checkpoint.bases,
        checkpoint.config,
        checkpoint.dataset_names or None,
        conditioned=checkpoint.params.n_datasets > 0,
    )
    return float(np.mean(trainer.validate(checkpoint.params)))
