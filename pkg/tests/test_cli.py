import json
from pathlib import Path

import jsonschema
import pytest

from befield.cli import CURVATURE_SCHEMA, RunConfig, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_json(args, capsys):
    code = run(args + ["--json"])
    return code, json.loads(capsys.readouterr().out)


SINGULAR = """\
chart:
  coords: [x, y]
  ranges: [[-1, 1], [-1, 1]]
metric:
  diagonal: ["x^2", "1"]
scalar: y
"""


class TestCheck:
    def test_eds_passes(self, capsys):
        code, rep = run_json(["check", "--model", "eds:n=3"], capsys)
        assert code == 0 and rep["pass"]
        assert max(rep["aggregates"].values()) <= 1e-9
        assert rep["extra"]["seed"] == 0

    def test_flat_sine_fails(self, capsys):
        code, rep = run_json(["check", "--model", str(CONFIGS / "flat_sin.yaml")], capsys)
        assert code == 1 and not rep["pass"]
        assert rep["aggregates"]["laplacian"] > 0.1

    def test_malformed_config(self, capsys):
        assert run(["check", "--model", str(CONFIGS / "bad_expression.yaml")]) == 2
        assert "offset 8" in capsys.readouterr().err

    def test_singular_metric(self, tmp_path, capsys):
        path = tmp_path / "cusp.yaml"
        path.write_text(SINGULAR)
        assert run(["check", "--model", str(path), "--points", "0,0.5"]) == 3
        assert "det g" in capsys.readouterr().err

    def test_sphere_quasi_einstein_summary(self, capsys):
        code, rep = run_json(["check", "--model", "sphere:n=2", "--m", "2"], capsys)
        qe = rep["extra"]["quasi_einstein"]
        assert qe["label"] == "shrinking" and qe["best_lambda"] == pytest.approx(1.0)

    @pytest.mark.parametrize("args", [["--tol", "-1"], ["--tol", "0"], ["--points", "1,2,3"], ["--m", "abc"]])
    def test_bad_flags(self, args):
        assert run(["check", "--model", "eds:n=3"] + args) == 2

    def test_unknown_preset(self):
        assert run(["check", "--model", "nope:n=3"]) == 2

    def test_missing_command(self):
        assert run([]) == 2


class TestVariation:
    def test_random_torus(self, capsys):
        code, rep = run_json(["variation", "--model", "torus:n=2", "--seed", "3"], capsys)
        assert code == 0 and rep["relative_gap"] <= 1e-6
        assert rep["seed"] == 3

    def test_critical_pair(self, capsys):
        code, rep = run_json(["variation", "--model", str(CONFIGS / "flat_critical.yaml"), "--grid", "8,8,8"], capsys)
        assert code == 0
        assert abs(rep["total_analytic"]) <= 1e-9 and abs(rep["total_numeric"]) <= 1e-9

    def test_config_with_direction(self, capsys):
        code, rep = run_json(["variation", "--model", str(CONFIGS / "torus_wave.yaml"), "--grid", "32"], capsys)
        assert code == 0 and rep["grid"] == [32, 32]

    def test_open_domain(self):
        assert run(["variation", "--model", str(CONFIGS / "polar_box.yaml")]) == 4

    def test_signature_change(self, tmp_path):
        path = tmp_path / "flip.yaml"
        path.write_text(
            "chart: {coords: [x, y], periodic: true}\nmetric: {diagonal: ['1', '1']}\nscalar: '0'\n"
            "perturbation: {s: {'x,x': '-150'}, h: '0'}\n"
        )
        assert run(["variation", "--model", str(path), "--grid", "4,4"]) == 3

    def test_bad_grid(self):
        assert run(["variation", "--model", "torus:n=2", "--grid", "4,x"]) == 2
        assert run(["variation", "--model", "torus:n=2", "--grid", "4,4,4"]) == 2


class TestCurvature:
    def test_minkowski_origin(self, capsys):
        code, data = run_json(["curvature", "--model", "minkowski", "--points", "0,0,0,0"], capsys)
        assert code == 0
        row = data["points"][0]
        assert row["scalar"] == 0.0 and not any(x for r in row["ricci"] for x in r)

    def test_eds_time_row(self, capsys):
        _, data = run_json(["curvature", "--model", "eds:n=3", "--points", "0,0,0,1"], capsys)
        assert data["points"][0]["ricci"][3][3] == pytest.approx(2 / 3, rel=1e-12)

    def test_schema(self, capsys):
        _, data = run_json(["curvature", "--model", "sphere:n=2", "--m", "inf"], capsys)
        jsonschema.validate(data, CURVATURE_SCHEMA)

    def test_text_tables(self, capsys):
        assert run(["curvature", "--model", "sphere:n=2", "--points", "1,1"]) == 0
        out = capsys.readouterr().out
        assert "ricci:" in out and "be_ricci:" in out


class TestReportMerge:
    def test_merge(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(["check", "--model", "eds:n=3", "--output", str(a)]) == 0
        assert run(["check", "--model", "eds:n=2", "--output", str(b)]) == 0
        capsys.readouterr()
        code, merged = run_json(["report-merge", str(a), str(b)], capsys)
        assert code == 0 and merged["model"] == "eds:n=2+eds:n=3"

    def test_failing_member(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(["check", "--model", "eds:n=3", "--output", str(a)])
        run(["check", "--model", str(CONFIGS / "flat_sin.yaml"), "--output", str(b)])
        assert run(["report-merge", str(a), str(b)]) == 1

    def test_not_a_report(self, tmp_path):
        bad = tmp_path / "x.json"
        bad.write_text("[1, 2]")
        assert run(["report-merge", str(bad)]) == 2


class TestDeterminism:
    @pytest.mark.parametrize(
        "args",
        [
            ["check", "--model", "eds:n=3", "--seed", "11"],
            ["check", "--model", "torus:n=3", "--seed", "4"],
            ["variation", "--model", "torus:n=2", "--seed", "7", "--grid", "16,16"],
            ["curvature", "--model", "sphere:n=3", "--seed", "2"],
        ],
    )
    def test_byte_identical(self, args, tmp_path):
        outs = []
        for k in range(2):
            path = tmp_path / f"{k}.json"
            run(args + ["--output", str(path)])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_report(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(["check", "--model", "eds:n=3", "--seed", "1", "--output", str(a)])
        run(["check", "--model", "eds:n=3", "--seed", "2", "--output", str(b)])
        assert a.read_bytes() != b.read_bytes()


class TestRunConfig:
    def test_tolerance_defaults(self):
        assert RunConfig("check").tolerance() == 1e-9
        assert RunConfig("variation").tolerance() == 1e-6
        assert RunConfig("check", tol=1e-4).tolerance() == 1e-4
