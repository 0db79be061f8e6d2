"""Eigendecomposed operators, closed-form evolution and its oracles."""

from .operator import (
    SINGULAR_DET_THRESHOLD,
    EigenOperator,
    Propagator,
    assemble,
    assemble_many,
    assemble_values,
    check_basis,
    evolve,
    evolve_many,
    read_operators_csv,
    write_operators_csv,
)
from .oracles import factorization_oracle, matexp_taylor_oracle

__all__ = [
    "SINGULAR_DET_THRESHOLD",
    "EigenOperator",
    "Propagator",
    "assemble",
    "assemble_many",
    "assemble_values",
    "check_basis",
    "evolve",
    "evolve_many",
    "factorization_oracle",
    "matexp_taylor_oracle",
    "read_operators_csv",
    "write_operators_csv",
]
