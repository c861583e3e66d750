"""Shared fixtures and the acceptance summary printed at the end of a run."""
from __future__ import annotations

import numpy as np
import pytest

from acopf.case_io import BUILTIN_CASES, load_case, parse_matpower_case
from acopf.formulations import FormulationKind, build_formulation, initial_point
from acopf.ipm import SolverOptions, solve

TWO_BUS = """\
function mpc = twobus
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t50\t20\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t3\t0.01\t10\t5;
];
"""

ALL_KINDS = tuple(FormulationKind)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


_ACCEPTANCE: dict[int, tuple[str, list[str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, (title, []))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry[1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcomes = _ACCEPTANCE[number]
        verdict = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")


@pytest.fixture(scope="session")
def case9():
    return load_case("case9")


@pytest.fixture(scope="session")
def two_bus():
    return parse_matpower_case(TWO_BUS)


@pytest.fixture(scope="session")
def cases():
    return {name: load_case(name) for name in BUILTIN_CASES}


@pytest.fixture(scope="session")
def solved():
    """Lazily solved (case, kind, box) cells shared across test modules."""
    cache: dict = {}

    def get(case_name: str, kind, box: bool = False):
        key = (case_name, FormulationKind(kind), box)
        if key not in cache:
            inst = build_formulation(kind, load_case(case_name), box=box)
            cache[key] = (inst, solve(inst.problem, SolverOptions(), initial_point(inst)))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
