"""Held-out evaluation, transport metrics and baselines."""

from .baselines import (
    WeightedCloud,
    interpolation_fraction,
    ot_interpolate,
    ot_interpolate_baseline,
    persistence_baseline,
)
from .protocol import (
    METHOD_MODEL,
    METHOD_OT_INTERPOLATE,
    METHOD_PERSISTENCE,
    EvalEntry,
    EvalReport,
    evaluate_baselines,
    evaluate_heldout,
    evaluate_protocol,
    score_baselines,
    mmd_metric,
    predict_heldout,
)
from .transport import SinkhornResult, cost_matrix, emd_exact, emd_plan, sinkhorn_coupling

__all__ = [
    "METHOD_MODEL",
    "METHOD_OT_INTERPOLATE",
    "METHOD_PERSISTENCE",
    "EvalEntry",
    "EvalReport",
    "SinkhornResult",
    "WeightedCloud",
    "cost_matrix",
    "emd_exact",
    "emd_plan",
    "evaluate_baselines",
    "evaluate_heldout",
    "evaluate_protocol",
    "interpolation_fraction",
    "mmd_metric",
    "ot_interpolate",
    "ot_interpolate_baseline",
    "persistence_baseline",
    "predict_heldout",
    "score_baselines",
    "sinkhorn_coupling",
]
