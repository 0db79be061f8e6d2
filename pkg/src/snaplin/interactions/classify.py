"""
Sign classification of regulatory edges from aggregated interaction weights.

A source gene qualifies when it is among the selected (most active) sources
and has more than ``min_edges`` classifiable database edges whose targets are
measured. Each edge is predicted Activation when its mean weight is positive,
Repression when it is negative and Unknown when it is exactly zero.
Activation is the positive class, so an Unknown prediction counts as a miss
for an Activation edge.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..logger import get_logger
from .regulatory import ACTIVATION, REPRESSION, UNKNOWN, RegulatoryDb
from .weights import AggregatedWeights

log = get_logger(__name__)


@dataclass
class EdgePrediction:
    target: str
    label: str
    predicted: str
    mean_weight: float


@dataclass
class SourceGeneResult:
    gene: str
    edge_count: int
    precision: float
    recall: float
    f1: float
    edges: List[EdgePrediction] = field(default_factory=list)


@dataclass
class InteractionReport:
    results: List[SourceGeneResult] = field(default_factory=list)
    n_cells: int = 0
    seeds: List[int] = field(default_factory=list)
    min_edges: int = 10

    def to_frame(self) -> pd.DataFrame:
        columns = ["gene", "edge_count", "precision", "recall", "f1"]
        return pd.DataFrame(
            [{key: getattr(result, key) for key in columns} for result in self.results], columns=columns
        )

    def write(self, directory: Path, stem: str = "interactions") -> Dict[str, Path]:
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{stem}.csv"
        json_path = directory / f"{stem}.json"
        self.to_frame().to_csv(csv_path, index=False)
        json_path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True), encoding="utf-8")
        return {"csv": csv_path, "json": json_path}


def binary_scores(predicted: Sequence[str], labels: Sequence[str]) -> tuple[float, float, float]:
    """Precision, recall and F1 with Activation as the positive class; undefined ratios are 0."""
    pred = np.asarray([p == ACTIVATION for p in predicted])
    true = np.asarray([label == ACTIVATION for label in labels])
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _predicted_mode(weight: float) -> str:
    if weight > 0:
        return ACTIVATION
    return REPRESSION if weight < 0 else UNKNOWN


def classify_edges(
    aggregated: AggregatedWeights,
    db: RegulatoryDb,
    selection: Optional[Sequence[str]] = None,
    min_edges: int = 10,
) -> InteractionReport:
    """
    Per-source-gene precision, recall and F1 of predicted edge signs.

    ``selection`` restricts the candidate sources (typically the union of
    the per-time top sources); None considers every measured source.
    """
    measured = {gene: j for j, gene in enumerate(aggregated.genes)}
    candidates = list(selection) if selection is not None else list(aggregated.genes)
    by_source = db.by_source()
    results: List[SourceGeneResult] = []
    for gene in candidates:
        if gene not in measured:
            continue
        edges = [
            edge for edge in by_source.get(gene, []) if edge.classifiable and edge.target in measured
        ]
        if len(edges) <= min_edges:
            continue
        predictions = []
        for edge in edges:
            weight = float(aggregated.mean[measured[edge.target], measured[gene]])
            predictions.append(
                EdgePrediction(
                    target=edge.target,
                    label=edge.mode,
                    predicted=_predicted_mode(weight),
                    mean_weight=weight,
                )
            )
        precision, recall, f1 = binary_scores(
            [p.predicted for p in predictions], [p.label for p in predictions]
        )
        results.append(
            SourceGeneResult(
                gene=gene, edge_count=len(edges), precision=precision, recall=recall, f1=f1, edges=predictions
            )
        )
    log.info("edges_classified", candidates=len(candidates), qualifying=len(results), min_edges=min_edges)
    return InteractionReport(
        results=results,
        n_cells=aggregated.n_cells,
        seeds=[aggregated.seed] if aggregated.seed is not None else [],
        min_edges=min_edges,
    )


def summarize_ensemble(reports: Sequence[InteractionReport]) -> pd.DataFrame:
    """Mean and population std of each gene's precision, recall and F1 across models."""
    frames = [report.to_frame().assign(model=k) for k, report in enumerate(reports)]
    if not frames:
        return pd.DataFrame(columns=["gene", "n_models"])
    stacked = pd.concat(frames, ignore_index=True)
    if stacked.empty:
        return pd.DataFrame(columns=["gene", "n_models"])
    summary = stacked.groupby("gene", sort=True).agg(
        n_models=("model", "nunique"),
        precision_mean=("precision", "mean"),
        precision_std=("precision", lambda s: float(np.std(s.to_numpy(), ddof=0))),
        recall_mean=("recall", "mean"),
        recall_std=("recall", lambda s: float(np.std(s.to_numpy(), ddof=0))),
        f1_mean=("f1", "mean"),
        f1_std=("f1", lambda s: float(np.std(s.to_numpy(), ddof=0))),
    )
    return summary.reset_index()
