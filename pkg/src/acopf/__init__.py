"""AC optimal power flow in nine formulations with an interior-point solver.

Typical use::

    from acopf import FormulationKind, build_formulation, initial_point, load_case, solve

    inst = build_formulation(FormulationKind.NIPAPV, load_case("case9"))
    result = solve(inst.problem, start=initial_point(inst))
"""
from .case_io import BUILTIN_CASES, NetworkCase, emit_matpower_case, load_case, validate_case
from .formulations import (FormulationKind, build_formulation, initial_point, map_solution,
                           residuals)
from .ipm import SolveResult, SolverOptions, Status, solve

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_CASES", "NetworkCase", "load_case", "emit_matpower_case", "validate_case",
    "FormulationKind", "build_formulation", "initial_point", "map_solution", "residuals",
    "SolveResult", "SolverOptions", "Status", "solve",
]
