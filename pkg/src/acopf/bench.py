"""Batch runs over (case x formulation x box), performance profiles and reports.

A run matrix is a list of :class:`RunRecord`, one per cell. Everything
downstream (profiles, box comparisons, emitted files) is a pure function of
that list, so reports can be recomputed from the emitted CSV alone.
"""
from __future__ import annotations

import csv
import json
import math
import statistics
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .case_io import NetworkCase, load_case
from .formulations import (BOX_KINDS, FormulationKind, build_formulation, initial_point)
from .ipm import SolverOptions, Status, solve

__all__ = [
    "SCHEMA_VERSION", "RunRecord", "BenchConfig", "ProfileCurve", "BoxComparison",
    "run_cell", "run_matrix", "warm_up", "performance_profile", "profile_table", "compare_box",
    "emit_report", "read_records_csv", "read_report_json", "BenchNotice",
]

SCHEMA_VERSION = 1
ERROR_STATUS = "Error"
TERMINAL_STATUSES = frozenset(s.value for s in Status)


class BenchNotice(UserWarning):
    """Non-fatal remark about the record set (dropped case, skipped pair, ...)."""


@dataclass(frozen=True)
class RunRecord:
    case: str
    kind: str
    box: bool
    status: str
    objective: float
    iterations: int
    wall_time: float
    build_time: float
    stationarity: float
    feasibility: float
    complementarity: float
    nonlinear_rows: int
    message: str = ""

    @property
    def solved(self) -> bool:
        return self.status == Status.OPTIMAL.value

    @property
    def solver(self) -> str:
        """Label used as the profile's solver axis."""
        return f"{self.kind}+box" if self.box else self.kind


_COLUMNS = tuple(f.name for f in fields(RunRecord))


@dataclass(frozen=True)
class BenchConfig:
    cases: tuple[str, ...]
    kinds: tuple[FormulationKind, ...] = tuple(FormulationKind)
    box_study: bool = False
    repeats: int = 3
    jobs: int = 1
    options: SolverOptions = field(default_factory=SolverOptions)
    force_degenerate: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        object.__setattr__(self, "kinds", tuple(FormulationKind(k) for k in self.kinds))
        object.__setattr__(self, "cases", tuple(str(c) for c in self.cases))

    def cells(self) -> list[tuple[str, FormulationKind, bool]]:
        out = []
        for case in self.cases:
            for kind in self.kinds:
                out.append((case, kind, False))
                if self.box_study and kind in BOX_KINDS:
                    out.append((case, kind, True))
        return out


@lru_cache(maxsize=32)
def _cached_case(source: str) -> NetworkCase:
    return load_case(source)


def _case_label(source: str) -> str:
    return Path(source).stem if source.endswith(".m") else source


def run_cell(case_source: str, kind, box: bool = False, repeats: int = 1,
             options: SolverOptions | None = None, force_degenerate: bool = False) -> RunRecord:
    """Build and solve one cell, never raising.

    The solve is repeated ``repeats`` times and the median wall time kept;
    status and iteration counts come from the first repetition (solves are
    deterministic). Harness failures produce a record with status ``Error``.
    """
    kind = FormulationKind(kind)
    label = _case_label(case_source)
    opts = options or SolverOptions()
    if force_degenerate and not opts.allow_degenerate:
        opts = SolverOptions(**{**asdict(opts), "allow_degenerate": True})
    try:
        case = _cached_case(case_source)
        label = case.name or label
        t0 = time.perf_counter()
        inst = build_formulation(kind, case, box=box)
        start = initial_point(inst)
        build_time = time.perf_counter() - t0
        times, first = [], None
        for _ in range(repeats):
            res = solve(inst.problem, opts, start)
            times.append(res.wall_time)
            first = first or res
        return RunRecord(label, kind.value, bool(box), first.status.value, float(first.objective),
                         int(first.iterations), float(statistics.median(times)), build_time,
                         float(first.stationarity), float(first.feasibility),
                         float(first.complementarity), inst.nonlinear_rows())
    except Exception as exc:  # noqa: BLE001 - cells are isolated by contract
        nan = math.nan
        return RunRecord(label, kind.value, bool(box), ERROR_STATUS, nan, 0, nan, nan,
                         nan, nan, nan, 0, f"{type(exc).__name__}: {exc}")


def _run_cell_args(args) -> RunRecord:
    return run_cell(*args)


_WARM = False


def warm_up() -> None:
    """Trigger the compiled kernels once so no timed cell pays for compilation."""
    global _WARM
    if not _WARM:
        run_cell("case9", FormulationKind.NIPAPV, options=SolverOptions(max_iter=3))
        _WARM = True


def run_matrix(config: BenchConfig) -> list[RunRecord]:
    """Run every cell of ``config``; records come back in cell order."""
    jobs = [(c, k, b, config.repeats, config.options, config.force_degenerate)
            for c, k, b in config.cells()]
    if config.jobs == 1 or len(jobs) <= 1:
        warm_up()
        return [_run_cell_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=config.jobs, initializer=warm_up) as pool:
        return list(pool.map(_run_cell_args, jobs))


# ---------------------------------------------------------------------------
# performance profiles

@dataclass(frozen=True)
class ProfileCurve:
    """Dolan-More profile of one solver: ``rho(tau)`` = share of problems
    solved within ``tau`` times the best time. Failures carry ratio ``inf``."""
    solver: str
    ratios: np.ndarray

    @property
    def n_problems(self) -> int:
        return len(self.ratios)

    def __call__(self, tau) -> np.ndarray | float:
        tau_arr = np.asarray(tau, float)
        finite = self.ratios[np.isfinite(self.ratios)]
        counts = np.searchsorted(finite, tau_arr, side="right")
        rho = counts / self.n_problems if self.n_problems else np.zeros_like(tau_arr)
        return float(rho) if rho.ndim == 0 else rho

    @property
    def success_fraction(self) -> float:
        return float(np.isfinite(self.ratios).mean()) if self.n_problems else 0.0

    def breakpoints(self) -> np.ndarray:
        finite = self.ratios[np.isfinite(self.ratios)]
        return np.unique(np.concatenate([[1.0], finite]))


def performance_profile(records, metric: str = "wall_time") -> dict[str, ProfileCurve]:
    """Profile curves keyed by solver label (kind, with ``+box`` for box runs).

    Problems are cases. A case where no solver reached Optimal is dropped
    with a :class:`BenchNotice`; a solver with no record on a kept case
    counts as failed there.
    """
    records = list(records)
    if not records:
        raise ValueError("performance profile of an empty record set")
    solvers = sorted({r.solver for r in records})
    cases = sorted({r.case for r in records})
    table: dict[str, dict[str, float]] = {s: {} for s in solvers}
    for r in records:
        value = float(getattr(r, metric))
        ok = r.solved and math.isfinite(value)
        table[r.solver][r.case] = value if ok else math.inf

    kept = []
    for case in cases:
        best = min(table[s].get(case, math.inf) for s in solvers)
        if math.isinf(best):
            warnings.warn(f"case {case!r} dropped from the profile: no solver succeeded",
                          BenchNotice, stacklevel=2)
        else:
            kept.append((case, best))

    curves = {}
    for s in solvers:
        ratios = []
        for case, best in kept:
            t = table[s].get(case, math.inf)
            # A zero best time (clock resolution) makes every success a tie.
            ratios.append(t / best if best > 0 else (1.0 if math.isfinite(t) else math.inf))
        curves[s] = ProfileCurve(s, np.sort(np.asarray(ratios, float)))
    return curves


def profile_table(curves: dict[str, ProfileCurve]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Sample every curve at the union of all breakpoints."""
    if not curves:
        return np.empty(0), {}
    taus = np.unique(np.concatenate([c.breakpoints() for c in curves.values()]))
    return taus, {name: np.atleast_1d(c(taus)) for name, c in curves.items()}


# ---------------------------------------------------------------------------
# box study

@dataclass(frozen=True)
class BoxComparison:
    case: str
    kind: str
    status_off: str
    status_on: str
    iterations_off: int
    iterations_on: int
    iteration_ratio: float
    time_ratio: float
    objective_off: float
    objective_on: float
    objective_change: float

    @property
    def status_changed(self) -> bool:
        return self.status_off != self.status_on


def _ratio(on: float, off: float) -> float:
    if off == 0:
        return 1.0 if on == 0 else math.inf
    return on / off


def compare_box(records) -> list[BoxComparison]:
    """Pair box-on with box-off records of the same (case, kind).

    Ratios are on/off, so 0.5 means the box halved the count. Unmatched
    records are skipped with a :class:`BenchNotice`.
    """
    off, on = {}, {}
    for r in records:
        (on if r.box else off)[(r.case, r.kind)] = r
    out = []
    for key in sorted(set(off) | set(on)):
        if key not in off or key not in on:
            if key in on or FormulationKind(key[1]) in BOX_KINDS:
                warnings.warn(f"no box pair for {key[0]}/{key[1]}", BenchNotice, stacklevel=2)
            continue
        a, b = off[key], on[key]
        scale = max(abs(a.objective), 1.0)
        out.append(BoxComparison(
            key[0], key[1], a.status, b.status, a.iterations, b.iterations,
            _ratio(b.iterations, a.iterations), _ratio(b.wall_time, a.wall_time),
            a.objective, b.objective, abs(b.objective - a.objective) / scale))
    return out


# ---------------------------------------------------------------------------
# reports

def _to_csv_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _from_csv_row(row: dict[str, str]) -> RunRecord:
    kw = {}
    for f in fields(RunRecord):
        raw = row[f.name]
        if f.type in ("float", float):
            kw[f.name] = float(raw)
        elif f.type in ("int", int):
            kw[f.name] = int(raw)
        elif f.type in ("bool", bool):
            kw[f.name] = raw == "True"
        else:
            kw[f.name] = raw
    return RunRecord(**kw)


def read_records_csv(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        return [_from_csv_row(row) for row in csv.DictReader(fh)]


def _json_float(v: float):
    return v if math.isfinite(v) else repr(v)


def _record_json(r: RunRecord) -> dict:
    return {k: (_json_float(v) if isinstance(v, float) else v) for k, v in asdict(r).items()}


def read_report_json(path) -> dict:
    """Load a JSON report; records come back as :class:`RunRecord`."""
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
    recs = []
    for raw in data["records"]:
        kw = {k: (float(v) if isinstance(v, str) and k not in ("case", "kind", "status", "message")
                  else v) for k, v in raw.items()}
        recs.append(RunRecord(**kw))
    data["records"] = recs
    return data


def emit_report(records, out_dir, curves: dict[str, ProfileCurve] | None = None,
                comparisons: list[BoxComparison] | None = None,
                formats=("csv", "json")) -> list[Path]:
    """Write ``runs.csv`` / ``report.json``, plus ``profile.csv`` and ``box.csv``.

    Floats in CSV use ``repr`` so they parse back bit-identically. An empty
    curve set means no profile file (a :class:`BenchNotice` says so).
    """
    records = list(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out / "runs.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_COLUMNS)
            for r in records:
                w.writerow([_to_csv_value(getattr(r, c)) for c in _COLUMNS])
        written.append(path)

    taus, rhos = profile_table(curves or {})
    if curves:
        path = out / "profile.csv"
        names = sorted(rhos)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", *names])
            for i, tau in enumerate(taus):
                w.writerow([repr(float(tau)), *(repr(float(rhos[n][i])) for n in names)])
        written.append(path)
    else:
        warnings.warn("no profile curves; profile.csv not written", BenchNotice, stacklevel=2)

    if comparisons:
        path = out / "box.csv"
        cols = [f.name for f in fields(BoxComparison)] + ["status_changed"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for c in comparisons:
                w.writerow([_to_csv_value(getattr(c, k)) for k in cols])
        written.append(path)

    if "json" in formats:
        path = out / "report.json"
        doc = {
            "schema_version": SCHEMA_VERSION,
            "records": [_record_json(r) for r in records],
            "profiles": {n: {"tau": taus.tolist(), "rho": rhos[n].tolist()} for n in sorted(rhos)},
            "box": [{**{k: (_json_float(v) if isinstance(v, float) else v)
                        for k, v in asdict(c).items()}, "status_changed": c.status_changed}
                    for c in comparisons or []],
        }
        path.write_text(json.dumps(doc, indent=2))
        written.append(path)
    return written
