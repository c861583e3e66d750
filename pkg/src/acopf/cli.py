"""Command line entry point: ``acopf solve | bench | check``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bench import (BenchConfig, TERMINAL_STATUSES, compare_box, emit_report,
                    performance_profile, run_cell, run_matrix)
from .case_io import BUILTIN_CASES, load_case, validate_case
from .formulations import (FormulationKind, build_formulation, degrees_of_freedom, initial_point,
                           residuals)
from .ipm import SolverOptions
from .nlp import check_derivatives

KIND_NAMES = [k.value for k in FormulationKind]


def _kind(text: str) -> FormulationKind:
    try:
        return FormulationKind(text.upper())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown formulation {text!r}; choose from {', '.join(KIND_NAMES)}") from None


def _kinds(text: str) -> list[FormulationKind]:
    if text.lower() == "all":
        return list(FormulationKind)
    return [_kind(t.strip()) for t in text.split(",") if t.strip()]


def _case_sources(text: str) -> list[str]:
    path = Path(text)
    if path.is_dir():
        found = sorted(str(p) for p in path.glob("*.m"))
        if not found:
            raise argparse.ArgumentTypeError(f"no .m case files in {text}")
        return found
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acopf", description="Build, solve and benchmark ACOPF formulations.")
    sub = parser.add_subparsers(dest="command", required=True)

    case_help = f"case file, or a bundled case name ({', '.join(BUILTIN_CASES)})"
    p = sub.add_parser("solve", help="solve one formulation of one case")
    p.add_argument("--case", required=True, help=case_help)
    p.add_argument("--formulation", required=True, type=_kind, metavar="KIND")
    p.add_argument("--box", action="store_true", help="add box bounds (box-capable kinds)")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=3000)
    p.add_argument("--force-degenerate", action="store_true",
                   help="attempt the solve even when degrees of freedom <= 0")
    p.add_argument("--output", choices=("json", "csv", "text"), default="text")

    b = sub.add_parser("bench", help="run a case x formulation matrix")
    b.add_argument("--cases", required=True, type=_case_sources,
                   help="directory of .m files or comma-separated names/paths")
    b.add_argument("--formulations", default="all", type=_kinds,
                   help="'all' or a comma-separated list of kinds")
    b.add_argument("--box-study", action="store_true",
                   help="also run box-capable kinds with box bounds")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--max-iter", type=int, default=3000)
    b.add_argument("--force-degenerate", action="store_true")
    b.add_argument("--out", required=True, help="output directory")

    c = sub.add_parser("check", help="derivative, residual and row-count checks")
    c.add_argument("--case", required=True, help=case_help)
    c.add_argument("--formulation", required=True, type=_kind, metavar="KIND")
    c.add_argument("--epsilon", type=float, default=1e-6)
    c.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_solve(args, out) -> int:
    opts = SolverOptions(tol=args.tol, max_iter=args.max_iter)
    rec = run_cell(args.case, args.formulation, args.box, 1, opts, args.force_degenerate)
    row = asdict(rec)
    if args.output == "json":
        out.write(json.dumps({k: (v if not isinstance(v, float) or np.isfinite(v) else repr(v))
                              for k, v in row.items()}, indent=2) + "\n")
    elif args.output == "csv":
        w = csv.DictWriter(out, fieldnames=list(row))
        w.writeheader()
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    else:
        out.write(f"{rec.case} {rec.kind}{' +box' if rec.box else ''}: {rec.status}\n")
        out.write(f"  objective      {rec.objective:.8f}\n")
        out.write(f"  iterations     {rec.iterations}\n")
        out.write(f"  solve time     {rec.wall_time:.3f} s (build {rec.build_time:.3f} s)\n")
        out.write(f"  kkt errors     stat {rec.stationarity:.2e}  feas {rec.feasibility:.2e}"
                  f"  compl {rec.complementarity:.2e}\n")
        if rec.message:
            out.write(f"  message        {rec.message}\n")
    return 0 if rec.status in TERMINAL_STATUSES else 1


def _cmd_bench(args, out) -> int:
    opts = SolverOptions(tol=args.tol, max_iter=args.max_iter)
    config = BenchConfig(tuple(args.cases), tuple(args.formulations), args.box_study,
                         args.repeats, args.jobs, opts, args.force_degenerate)
    records = run_matrix(config)
    with warnings.catch_warnings(record=True) as notes:
        warnings.simplefilter("always")
        solved = [r for r in records if r.status != "Error"]
        curves = performance_profile(solved) if solved else {}
        comparisons = compare_box(records) if args.box_study else []
        paths = emit_report(records, args.out, curves, comparisons)
    for note in notes:
        out.write(f"note: {note.message}\n")
    for r in records:
        out.write(f"{r.case:>10} {r.kind:<7}{'+box' if r.box else '    '} {r.status:<18}"
                  f"{r.objective:>16.6f} {r.iterations:>5} {r.wall_time:>9.3f}s\n")
    for p in paths:
        out.write(f"wrote {p}\n")
    return 0 if all(r.status in TERMINAL_STATUSES for r in records) else 1


def _cmd_check(args, out) -> int:
    case = load_case(args.case)
    report = validate_case(case)
    inst = build_formulation(args.formulation, case)
    prob = inst.problem
    rng = np.random.default_rng(args.seed)
    x0 = initial_point(inst).x
    lo = np.where(np.isfinite(prob.x_lower), prob.x_lower, x0 - 1.0)
    up = np.where(np.isfinite(prob.x_upper), prob.x_upper, x0 + 1.0)
    x = lo + (up - lo) * rng.uniform(0.1, 0.9, prob.n)
    deriv = check_derivatives(prob, x, args.epsilon, rng=rng)
    flat = residuals(inst, x0)
    built, expected = inst.nonlinear_rows(), inst.expected_nonlinear_rows()
    dof = degrees_of_freedom(inst)

    out.write(f"{case.name} {inst.kind.value}: {prob.n} variables, {prob.m} rows\n")
    out.write(f"  case validation     {'ok' if report.valid else f'{len(report)} findings'}\n")
    out.write(f"  jacobian error      {deriv.jacobian_error:.2e}\n")
    out.write(f"  hessian error       {deriv.hessian_error:.2e}\n")
    out.write(f"  gradient error      {deriv.gradient_error:.2e}\n")
    out.write(f"  flat-start residual {flat.max_violation:.4e}\n")
    out.write(f"  nonlinear rows      {built} (expected {expected})\n")
    out.write(f"  degrees of freedom  {dof}{'  [degenerate]' if dof <= 0 else ''}\n")
    ok = report.valid and deriv.ok(1e-6) and built == expected
    return 0 if ok else 1


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    handler = {"solve": _cmd_solve, "bench": _cmd_bench, "check": _cmd_check}[args.command]
    try:
        return handler(args, out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
