import csv
import io
import json
import subprocess
import sys

import pytest

from acopf.bench import read_report_json
from acopf.case_io import emit_matpower_case, load_case
from acopf.cli import build_parser, main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


class TestSolve:
    def test_text(self):
        code, text = run("solve", "--case", "case9", "--formulation", "nipapv")
        assert code == 0
        assert "Optimal" in text and "objective" in text

    def test_json(self):
        code, text = run("solve", "--case", "case9", "--formulation", "BCFRV", "--output", "json")
        data = json.loads(text)
        assert code == 0 and data["status"] == "Optimal"
        assert data["objective"] == pytest.approx(5296.686203991521, rel=1e-5)

    def test_csv(self):
        code, text = run("solve", "--case", "case9", "--formulation", "BPFPV", "--box",
                         "--output", "csv")
        rows = list(csv.DictReader(io.StringIO(text)))
        assert code == 0 and len(rows) == 1 and rows[0]["box"] == "True"

    def test_degenerate_is_terminal(self):
        code, text = run("solve", "--case", "case9", "--formulation", "BPFW")
        assert code == 0 and "Degenerate" in text

    def test_unknown_formulation(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["solve", "--case", "case9", "--formulation", "XYZ"])

    def test_missing_case(self, tmp_path):
        code, text = run("solve", "--case", str(tmp_path / "none.m"), "--formulation", "BPFPV")
        assert code == 1 and "Error" in text


class TestBench:
    def test_box_study(self, tmp_path):
        code, text = run("bench", "--cases", "case9", "--formulations", "BPFPV,NIPAPV",
                         "--box-study", "--repeats", "1", "--out", str(tmp_path))
        assert code == 0
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {"runs.csv", "profile.csv", "box.csv", "report.json"}
        report = read_report_json(tmp_path / "report.json")
        assert {r.solver for r in report["records"]} == {"BPFPV", "BPFPV+box", "NIPAPV"}
        assert len(report["box"]) == 1

    def test_directory_of_cases(self, tmp_path):
        src = tmp_path / "cases"
        src.mkdir()
        (src / "case9.m").write_text(emit_matpower_case(load_case("case9")))
        code, text = run("bench", "--cases", str(src), "--formulations", "NIPAPV",
                         "--repeats", "1", "--out", str(tmp_path / "out"))
        assert code == 0 and "case9" in text

    def test_empty_directory(self, tmp_path):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["bench", "--cases", str(tmp_path), "--out", "x"])


class TestCheck:
    def test_passes(self):
        code, text = run("check", "--case", "case9", "--formulation", "NIRAPV")
        assert code == 0
        assert "nonlinear rows      36 (expected 36)" in text

    def test_degenerate_reported(self):
        code, text = run("check", "--case", "case9", "--formulation", "NIRAW")
        assert "[degenerate]" in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "acopf", "--help"],
                          capture_output=True, text=True, check=True)
    assert "solve" in proc.stdout and "bench" in proc.stdout
