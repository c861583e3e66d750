"""Network case model and a strict MATPOWER-subset reader/writer.

All electrical quantities in a :class:`NetworkCase` are per-unit on
``base_mva``. Generator cost coefficients are converted so that the
objective is evaluated directly on per-unit real power.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "BusType", "Bus", "Generator", "Load", "Branch", "NetworkCase",
    "CaseFormatError", "ValidationReport",
    "parse_matpower_case", "load_case", "emit_matpower_case", "validate_case",
    "builtin_case_path", "BUILTIN_CASES",
]

DATA_DIR = Path(__file__).parent / "data"
BUILTIN_CASES = ("case9", "case14", "case30", "case57", "case118")


class BusType(enum.IntEnum):
    PQ = 1
    PV = 2
    SLACK = 3


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType
    v_min: float
    v_max: float
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    base_kv: float = 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    i_max: float = 0.0  # 0 means unlimited


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    branches: tuple[Branch, ...]
    name: str = ""

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def bus_index(self) -> dict[int, int]:
        """Map bus id to its position in ``buses``."""
        return {b.id: k for k, b in enumerate(self.buses)}

    def slack_positions(self) -> list[int]:
        return [k for k, b in enumerate(self.buses) if b.bus_type == BusType.SLACK]

    def bus_loads(self) -> tuple[np.ndarray, np.ndarray]:
        """Aggregate real and reactive demand per bus position."""
        idx = self.bus_index()
        pd = np.zeros(self.n_buses)
        qd = np.zeros(self.n_buses)
        for ld in self.loads:
            pd[idx[ld.bus]] += ld.p
            qd[idx[ld.bus]] += ld.q
        return pd, qd


class CaseFormatError(ValueError):
    """Raised for malformed or unsupported case-file content."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# ---------------------------------------------------------------------------
# reader

_MATRIX_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_SCALAR = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^;]+);?\s*$")
_FUNCTION = re.compile(r"^\s*function\s+(?:\w+\s*=\s*)?(\w+)\s*$")

_MATRIX_COLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_rows(body: list[tuple[int, str]], name: str) -> list[tuple[int, list[float]]]:
    rows: list[tuple[int, list[float]]] = []
    current: list[float] = []
    current_line = None
    for lineno, text in body:
        for chunk_no, chunk in enumerate(text.split(";")):
            if chunk_no > 0 and current:
                rows.append((current_line, current))
                current = []
            for tok in chunk.replace(",", " ").split():
                try:
                    value = float(tok)
                except ValueError:
                    raise CaseFormatError(f"invalid number {tok!r} in mpc.{name}", lineno) from None
                if not current:
                    current_line = lineno
                current.append(value)
    if current:
        rows.append((current_line, current))
    return rows


def _read_sections(text: str) -> tuple[str, dict[str, float], dict[str, list]]:
    name = ""
    scalars: dict[str, float] = {}
    matrices: dict[str, list] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        raw = lines[i]
        line = _strip_comment(raw).strip()
        i += 1
        if not line:
            continue
        m = _FUNCTION.match(line)
        if m:
            name = m.group(1)
            continue
        m = _MATRIX_START.match(line)
        if m:
            key = m.group(1)
            if key not in _MATRIX_COLS:
                raise CaseFormatError(f"unsupported field mpc.{key}", lineno)
            if key in matrices:
                raise CaseFormatError(f"duplicate field mpc.{key}", lineno)
            body: list[tuple[int, str]] = []
            rest = m.group(2)
            while True:
                end = rest.find("]")
                if end >= 0:
                    body.append((lineno, rest[:end]))
                    if rest[end + 1:].strip() not in ("", ";"):
                        raise CaseFormatError(f"unexpected text after mpc.{key} matrix", lineno)
                    break
                body.append((lineno, rest))
                if i >= len(lines):
                    raise CaseFormatError(f"unterminated matrix mpc.{key}", lineno)
                lineno = i + 1
                rest = _strip_comment(lines[i])
                i += 1
            matrices[key] = _parse_rows(body, key)
            continue
        m = _SCALAR.match(line)
        if m:
            key, value = m.group(1), m.group(2).strip()
            if key == "version":
                if value.strip("'\"") != "2":
                    raise CaseFormatError(f"unsupported case version {value}", lineno)
                continue
            if key != "baseMVA":
                raise CaseFormatError(f"unsupported field mpc.{key}", lineno)
            try:
                scalars[key] = float(value)
            except ValueError:
                raise CaseFormatError(f"invalid baseMVA value {value!r}", lineno) from None
            continue
        raise CaseFormatError(f"cannot parse {raw.strip()!r}", lineno)
    return name, scalars, matrices


def parse_matpower_case(text: str, name: str = "") -> NetworkCase:
    """Parse MATPOWER case text into a per-unit :class:`NetworkCase`.

    Supported fields are ``baseMVA``, ``bus``, ``gen``, ``branch`` and
    ``gencost`` (polynomial model, degree at most 2). Out-of-service
    generators and branches are dropped. Bus demand columns become
    :class:`Load` records; ``rateA`` becomes a current limit at 1 pu voltage.
    """
    fname, scalars, mats = _read_sections(text)
    for key in ("baseMVA",):
        if key not in scalars:
            raise CaseFormatError(f"missing mpc.{key}")
    for key in ("bus", "gen", "branch", "gencost"):
        if key not in mats:
            raise CaseFormatError(f"missing mpc.{key}")
    base = scalars["baseMVA"]
    if not base > 0:
        raise CaseFormatError("baseMVA must be positive")

    for key, rows in mats.items():
        for lineno, row in rows:
            if len(row) < _MATRIX_COLS[key]:
                raise CaseFormatError(
                    f"mpc.{key} row has {len(row)} columns, need at least {_MATRIX_COLS[key]}", lineno)

    buses, loads = [], []
    for lineno, row in mats["bus"]:
        bid, btype = int(row[0]), int(row[1])
        if btype not in (1, 2, 3):
            raise CaseFormatError(f"unsupported bus type {btype} for bus {bid}", lineno)
        pd, qd, gs, bs = row[2:6]
        buses.append(Bus(bid, BusType(btype), v_min=row[12], v_max=row[11],
                         shunt_g=gs / base, shunt_b=bs / base, base_kv=row[9]))
        if pd != 0.0 or qd != 0.0:
            loads.append(Load(bid, pd / base, qd / base))

    if len(mats["gencost"]) != len(mats["gen"]):
        if len(mats["gencost"]) == 2 * len(mats["gen"]):
            raise CaseFormatError("reactive power cost rows are not supported")
        raise CaseFormatError(
            f"mpc.gencost has {len(mats['gencost'])} rows for {len(mats['gen'])} generators")

    gens = []
    for (lineno, row), (cline, cost) in zip(mats["gen"], mats["gencost"]):
        model, ncost = int(cost[0]), int(cost[3])
        if model == 1:
            raise CaseFormatError("piecewise-linear cost model (type 1) is not supported", cline)
        if model != 2:
            raise CaseFormatError(f"unknown cost model {model}", cline)
        if ncost > 3:
            raise CaseFormatError(f"polynomial cost of degree {ncost - 1} is not supported", cline)
        if len(cost) < 4 + ncost:
            raise CaseFormatError("gencost row shorter than its declared coefficient count", cline)
        coeffs = [0.0] * (3 - ncost) + list(cost[4:4 + ncost])
        if row[7] <= 0:
            continue
        c2, c1, c0 = coeffs
        gens.append(Generator(int(row[0]), p_min=row[9] / base, p_max=row[8] / base,
                              q_min=row[4] / base, q_max=row[3] / base,
                              c2=c2 * base * base, c1=c1 * base, c0=c0))

    branches = []
    for lineno, row in mats["branch"]:
        if row[10] <= 0:
            continue
        tap = row[8] if row[8] != 0.0 else 1.0
        branches.append(Branch(int(row[0]), int(row[1]), r=row[2], x=row[3], b_charging=row[4],
                               tap=tap, shift=math.radians(row[9]), i_max=row[5] / base))

    return NetworkCase(base, tuple(buses), tuple(gens), tuple(loads), tuple(branches),
                       name=name or fname)


def builtin_case_path(name: str) -> Path:
    path = DATA_DIR / f"{name}.m"
    if not path.exists():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return path


def load_case(source: str | Path) -> NetworkCase:
    """Read a case from a file path, or a bundled case by name (``"case9"``)."""
    path = Path(source)
    if not path.exists() and str(source) in BUILTIN_CASES:
        path = builtin_case_path(str(source))
    text = path.read_text()
    return parse_matpower_case(text, name=path.stem)


# ---------------------------------------------------------------------------
# writer (test fixtures, round trips)

def _encode(value: float, to_file, from_file) -> str:
    # Pick the decimal whose parse-and-convert reproduces `value` exactly.
    guess = float(to_file(value))
    candidates = [guess]
    lo = hi = guess
    for _ in range(4):
        hi, lo = np.nextafter(hi, np.inf), np.nextafter(lo, -np.inf)
        candidates += [hi, lo]
    for candidate in candidates:
        text = repr(float(candidate))
        if from_file(float(text)) == value:
            return text
    return repr(guess)


def _scaled(value: float, base: float) -> str:
    return _encode(value, lambda v: v * base, lambda v: v / base)


def emit_matpower_case(case: NetworkCase) -> str:
    """Write ``case`` as MATPOWER text readable by :func:`parse_matpower_case`."""
    base = case.base_mva
    load_by_bus: dict[int, list[float]] = {}
    for ld in case.loads:
        acc = load_by_bus.setdefault(ld.bus, [0.0, 0.0])
        acc[0] += ld.p
        acc[1] += ld.q
    r = repr
    out = [f"function mpc = {case.name or 'case'}", "mpc.version = '2';",
           f"mpc.baseMVA = {r(float(base))};", "mpc.bus = ["]
    for b in case.buses:
        pd, qd = load_by_bus.get(b.id, (0.0, 0.0))
        out.append("\t" + "\t".join([
            str(b.id), str(int(b.bus_type)), _scaled(pd, base), _scaled(qd, base),
            _scaled(b.shunt_g, base), _scaled(b.shunt_b, base), "1", "1", "0",
            r(float(b.base_kv)), "1", r(float(b.v_max)), r(float(b.v_min))]) + ";")
    out += ["];", "mpc.gen = ["]
    for g in case.generators:
        out.append("\t" + "\t".join([
            str(g.bus), "0", "0", _scaled(g.q_max, base), _scaled(g.q_min, base), "1",
            r(float(base)), "1", _scaled(g.p_max, base), _scaled(g.p_min, base)]) + ";")
    out += ["];", "mpc.branch = ["]
    for br in case.branches:
        out.append("\t" + "\t".join([
            str(br.from_bus), str(br.to_bus), r(float(br.r)), r(float(br.x)),
            r(float(br.b_charging)), _scaled(br.i_max, base), "0", "0",
            r(float(br.tap)), _encode(br.shift, math.degrees, math.radians), "1", "-360", "360"]) + ";")
    out += ["];", "mpc.gencost = ["]
    for g in case.generators:
        out.append("\t" + "\t".join([
            "2", "0", "0", "3",
            _encode(g.c2, lambda v: v / (base * base), lambda v: v * base * base),
            _encode(g.c1, lambda v: v / base, lambda v: v * base), r(float(g.c0))]) + ";")
    out.append("];")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    findings: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.findings

    def __len__(self) -> int:
        return len(self.findings)


def validate_case(case: NetworkCase) -> ValidationReport:
    """List every violated :class:`NetworkCase` invariant."""
    report = ValidationReport()
    add = report.findings.append
    seen: set[int] = set()
    for b in case.buses:
        if b.id in seen:
            add(f"duplicate bus id {b.id}")
        seen.add(b.id)
        if not 0 < b.v_min <= b.v_max:
            add(f"bus {b.id}: voltage bounds [{b.v_min}, {b.v_max}] invalid")
    if not any(b.bus_type == BusType.SLACK for b in case.buses):
        add("no slack bus")
    for k, g in enumerate(case.generators):
        if g.bus not in seen:
            add(f"generator {k} on nonexistent bus {g.bus}")
        if g.p_min > g.p_max:
            add(f"generator {k}: p_min > p_max")
        if g.q_min > g.q_max:
            add(f"generator {k}: q_min > q_max")
        if g.c2 < 0:
            add(f"generator {k}: negative quadratic cost")
    for k, ld in enumerate(case.loads):
        if ld.bus not in seen:
            add(f"load {k} on nonexistent bus {ld.bus}")
        if not (math.isfinite(ld.p) and math.isfinite(ld.q)):
            add(f"load {k}: non-finite demand")
    for k, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                add(f"branch {k} references nonexistent bus {end}")
        if br.from_bus == br.to_bus:
            add(f"branch {k} is a self loop on bus {br.from_bus}")
        if br.r == 0 and br.x == 0:
            add(f"branch {k} has zero impedance")
        if not br.tap > 0:
            add(f"branch {k}: tap ratio must be positive")
    return report
