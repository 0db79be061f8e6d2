"""Observation-space interaction weights and regulatory edge classification."""

from .classify import (
    EdgePrediction,
    InteractionReport,
    SourceGeneResult,
    binary_scores,
    classify_edges,
    summarize_ensemble,
)
from .export import export_operators, operator_columns
from .regulatory import (
    ACTIVATION,
    MODES,
    REPRESSION,
    UNKNOWN,
    RegulatoryDb,
    RegulatoryEdge,
    collapse_edges,
    load_regulatory_db,
)
from .weights import (
    AggregatedWeights,
    InteractionMatrix,
    SourceRanking,
    aggregate_weights,
    interaction_weights,
    resolve_genes,
    sample_cells,
    source_activity,
    top_source_genes,
)

__all__ = [
    "ACTIVATION",
    "MODES",
    "REPRESSION",
    "UNKNOWN",
    "AggregatedWeights",
    "EdgePrediction",
    "InteractionMatrix",
    "InteractionReport",
    "RegulatoryDb",
    "RegulatoryEdge",
    "SourceGeneResult",
    "SourceRanking",
    "aggregate_weights",
    "binary_scores",
    "classify_edges",
    "collapse_edges",
    "export_operators",
    "interaction_weights",
    "load_regulatory_db",
    "operator_columns",
    "resolve_genes",
    "sample_cells",
    "source_activity",
    "summarize_ensemble",
    "top_source_genes",
]
