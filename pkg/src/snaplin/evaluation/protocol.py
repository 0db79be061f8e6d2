"""
Held-out-marginal scoring and the evaluation report.

A model trained without the marginal at ``heldout_t`` pushes the preceding
marginal (or the initial one) forward in closed form; the prediction is
scored against the held-out samples in latent coordinates, next to the
OT-Interpolate and persistence baselines.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..config import EvalConfig, LossConfig
from ..data.dataset import SnapshotDataset
from ..data.pca import PcaBasis, project
from ..encoder.network import push_latent, rollout
from ..logger import get_logger
from ..losses.kernels import mmd2_streamed
from ..training.checkpoint import Checkpoint
from .baselines import WeightedCloud, ot_interpolate_baseline, persistence_baseline
from .transport import emd_exact

log = get_logger(__name__)

METHOD_MODEL = "model"
METHOD_OT_INTERPOLATE = "ot_interpolate"
METHOD_PERSISTENCE = "persistence"


def mmd_metric(
    xs: np.ndarray,
    ys: np.ndarray,
    loss_cfg: LossConfig,
    batch_size: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    n_threads: int = 1,
) -> float:
    """
    MMD with the training kernel.

    Without ``batch_size`` the full V-statistic is streamed over Gram tiles.
    With it, both samples are shuffled and split into batches of that size and
    the metric is the mean over paired batches.
    """
    if batch_size is None:
        return mmd2_streamed(
            xs, ys, loss_cfg.sigma, loss_cfg.eps_kernel, loss_cfg.gram_block_size, n_threads
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    xs = xs[rng.permutation(xs.shape[0])]
    ys = ys[rng.permutation(ys.shape[0])]
    n_batches = max(1, min(xs.shape[0], ys.shape[0]) // batch_size)
    scores = [
        mmd2_streamed(
            xs[k * batch_size : (k + 1) * batch_size],
            ys[k * batch_size : (k + 1) * batch_size],
            loss_cfg.sigma,
            loss_cfg.eps_kernel,
            loss_cfg.gram_block_size,
            n_threads,
        )
        for k in range(n_batches)
    ]
    return float(np.mean(scores))


@dataclass
class EvalEntry:
    dataset: str
    heldout_t: float
    seed: int
    method: str
    metric: str
    score: float


@dataclass
class EvalReport:
    """Scores keyed by ``(dataset, heldout_t, seed, method)``."""

    entries: List[EvalEntry] = field(default_factory=list)
    std_axis: str = "held-out times x seeds (population std, ddof=0)"

    def add(self, entry: EvalEntry) -> None:
        self.entries.append(entry)

    def extend(self, other: "EvalReport") -> None:
        self.entries.extend(other.entries)

    def to_frame(self) -> pd.DataFrame:
        columns = ["dataset", "heldout_t", "seed", "method", "metric", "score"]
        return pd.DataFrame([asdict(entry) for entry in self.entries], columns=columns)

    def summary(self) -> pd.DataFrame:
        """Mean and standard deviation per (dataset, method, metric)."""
        frame = self.to_frame()
        grouped = frame.groupby(["dataset", "method", "metric"], sort=True)["score"]
        summary = grouped.agg(mean="mean", std=lambda s: float(np.std(s.to_numpy(), ddof=0)), n="count")
        return summary.reset_index()

    def write(self, directory: Path, stem: str = "eval_report") -> Dict[str, Path]:
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{stem}.csv"
        json_path = directory / f"{stem}.json"
        self.to_frame().to_csv(csv_path, index=False)
        payload = {
            "std_axis": self.std_axis,
            "entries": [asdict(entry) for entry in self.entries],
            "summary": self.summary().to_dict(orient="records"),
        }
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        return {"csv": csv_path, "json": json_path}


def _score(
    prediction: Union[np.ndarray, WeightedCloud],
    truth: np.ndarray,
    mode: str,
    eval_cfg: EvalConfig,
    loss_cfg: LossConfig,
    rng: np.random.Generator,
    n_threads: int,
) -> float:
    if mode == "emd":
        if isinstance(prediction, WeightedCloud):
            return emd_exact(prediction.points, truth, x_weights=prediction.weights, n_threads=n_threads)
        return emd_exact(prediction, truth, n_threads=n_threads)
    points = prediction.sample(truth.shape[0], rng) if isinstance(prediction, WeightedCloud) else prediction
    return mmd_metric(points, truth, loss_cfg, eval_cfg.mmd_batch_size, rng, n_threads)


def predict_heldout(
    checkpoint: Checkpoint,
    dataset: SnapshotDataset,
    heldout_t: float,
    eval_cfg: EvalConfig,
    dataset_index: Optional[int] = None,
) -> np.ndarray:
    """
    Latent prediction of the marginal at ``heldout_t``.

    When the checkpoint was trained with a re-linearization stride, a push
    from the initial time re-encodes at the observed grid times in between.
    """
    basis = checkpoint.bases[dataset_index or 0]
    if eval_cfg.source == "initial":
        t_src = dataset.grid.values[0]
    else:
        t_src, _ = dataset.grid.neighbors(heldout_t)
    z = project(basis, dataset.marginal(t_src))
    idx = dataset_index if checkpoint.params.n_datasets > 0 else None
    stride = checkpoint.config.loss.relinearize_every
    waypoints = [t for t in dataset.grid.values if t_src < t < heldout_t]
    if not stride or not waypoints:
        return push_latent(checkpoint.params, z, t_src, heldout_t - t_src, idx=idx, chunk=eval_cfg.push_chunk)
    targets = waypoints + [heldout_t]
    out = np.empty_like(z)
    for start in range(0, z.shape[0], eval_cfg.push_chunk):
        stop = min(start + eval_cfg.push_chunk, z.shape[0])
        out[start:stop] = rollout(checkpoint.params, z[start:stop], t_src, targets, idx, stride)[-1]
    return out


def evaluate_heldout(
    checkpoint: Checkpoint,
    dataset: SnapshotDataset,
    heldout_t: float,
    eval_cfg: EvalConfig,
    loss_cfg: Optional[LossConfig] = None,
    dataset_name: str = "dataset0",
    dataset_index: Optional[int] = None,
    n_threads: int = 1,
) -> EvalEntry:
    """Score the model's prediction of one held-out marginal."""
    if checkpoint.heldout_time is not None and checkpoint.heldout_time != heldout_t:
        log.warning("checkpoint_heldout_mismatch", trained=checkpoint.heldout_time, evaluated=heldout_t)
    loss_cfg = loss_cfg or checkpoint.config.loss
    basis = checkpoint.bases[dataset_index or 0]
    truth = project(basis, dataset.marginal(heldout_t))
    prediction = predict_heldout(checkpoint, dataset, heldout_t, eval_cfg, dataset_index)
    rng = np.random.default_rng(np.random.SeedSequence([checkpoint.seed, 7]))
    score = _score(prediction, truth, eval_cfg.mode, eval_cfg, loss_cfg, rng, n_threads)
    log.info("heldout_evaluated", dataset=dataset_name, heldout=heldout_t, mode=eval_cfg.mode, score=score)
    return EvalEntry(
        dataset=dataset_name,
        heldout_t=float(heldout_t),
        seed=checkpoint.seed,
        method=METHOD_MODEL,
        metric=eval_cfg.mode,
        score=score,
    )


def score_baselines(
    dataset: SnapshotDataset,
    heldout_t: float,
    basis: PcaBasis,
    eval_cfg: EvalConfig,
    loss_cfg: LossConfig,
    seed: int = 0,
    dataset_name: str = "dataset0",
    methods: Sequence[str] = (METHOD_OT_INTERPOLATE, METHOD_PERSISTENCE),
    n_threads: int = 1,
) -> List[EvalEntry]:
    """Baseline scores in the latent space of ``basis``; no trained model needed."""
    truth = project(basis, dataset.marginal(heldout_t))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    entries = []
    for method in methods:
        prediction: Union[np.ndarray, WeightedCloud]
        if method == METHOD_OT_INTERPOLATE:
            prediction = ot_interpolate_baseline(
                dataset,
                heldout_t,
                basis,
                exact_limit=eval_cfg.exact_ot_limit,
                reg_scale=eval_cfg.sinkhorn_reg_scale,
                rng=rng,
                max_iter=eval_cfg.sinkhorn_max_iter,
                tol=eval_cfg.sinkhorn_tol,
            )
        elif method == METHOD_PERSISTENCE:
            prediction = persistence_baseline(dataset, heldout_t, basis)
        else:
            raise ValueError(f"unknown baseline '{method}'")
        score = _score(prediction, truth, eval_cfg.mode, eval_cfg, loss_cfg, rng, n_threads)
        log.info("baseline_evaluated", dataset=dataset_name, heldout=heldout_t, method=method, score=score)
        entries.append(
            EvalEntry(
                dataset=dataset_name,
                heldout_t=float(heldout_t),
                seed=seed,
                method=method,
                metric=eval_cfg.mode,
                score=score,
            )
        )
    return entries


def evaluate_baselines(
    dataset: SnapshotDataset,
    heldout_t: float,
    checkpoint: Checkpoint,
    eval_cfg: EvalConfig,
    loss_cfg: Optional[LossConfig] = None,
    dataset_name: str = "dataset0",
    dataset_index: Optional[int] = None,
    methods: Sequence[str] = (METHOD_OT_INTERPOLATE, METHOD_PERSISTENCE),
    n_threads: int = 1,
) -> List[EvalEntry]:
    """Baseline scores in the latent space of ``checkpoint``'s basis."""
    return score_baselines(
        dataset,
        heldout_t,
        checkpoint.bases[dataset_index or 0],
        eval_cfg,
        loss_cfg or checkpoint.config.loss,
        seed=checkpoint.seed,
        dataset_name=dataset_name,
        methods=methods,
        n_threads=n_threads,
    )


def evaluate_protocol(
    checkpoints: Mapping[float, Checkpoint],
    dataset: SnapshotDataset,
    eval_cfg: EvalConfig,
    dataset_name: str = "dataset0",
    dataset_index: Optional[int] = None,
    include_baselines: bool = True,
    n_threads: int = 1,
) -> EvalReport:
    """Model and baseline scores for every held-out time in ``checkpoints``."""
    report = EvalReport()
    for heldout_t in sorted(checkpoints):
        checkpoint = checkpoints[heldout_t]
        report.add(
            evaluate_heldout(
                checkpoint,
                dataset,
                heldout_t,
                eval_cfg,
                dataset_name=dataset_name,
                dataset_index=dataset_index,
                n_threads=n_threads,
            )
        )
        if include_baselines:
            for entry in evaluate_baselines(
                dataset,
                heldout_t,
                checkpoint,
                eval_cfg,
                dataset_name=dataset_name,
                dataset_index=dataset_index,
                n_threads=n_threads,
            ):
                report.add(entry)
    return report
