"""Interior-point solver and its sparse symmetric-indefinite linear algebra."""
from .ldl import BK_ALPHA, Inertia, LDLFactor, amd_order, ldl_factor
from .solver import (IterationRecord, KKTSystem, LineSearchResult, SolveResult, SolverOptions,
                     Status, assemble_kkt, factorize_with_inertia, fraction_to_boundary,
                     line_search, solve, update_barrier)

__all__ = [
    "BK_ALPHA", "Inertia", "LDLFactor", "amd_order", "ldl_factor",
    "IterationRecord", "KKTSystem", "LineSearchResult", "SolveResult", "SolverOptions",
    "Status", "assemble_kkt", "factorize_with_inertia", "fraction_to_boundary",
    "line_search", "solve", "update_barrier",
]
