"""Command line front end: ``check``, ``variation``, ``curvature`` and ``report-merge``.

Exit codes: 0 pass, 1 residual failure, 2 configuration error, 3 singular or
signature-changing metric, 4 unsupported domain.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import expr as ex
from .bakry_emery import BEParam, be_ricci_jet, field_jet
from .chart import MetricError, SampleGrid, UnsupportedDomainError, sample_points
from .config import ConfigError, load_model
from .field_eq import ResidualReport, merge_reports, residual_report, stress_tensor_jet
from .geometry import Frame, grad_norm_sq_jet, hessian_jet, laplacian_jet
from .models import random_direction
from .variation import VariationInstance, variation_report

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_DOMAIN = 4

DEFAULT_TOL = {"check": 1e-9, "variation": 1e-6}
DEFAULT_GRID = 32
CHECK_POINTS = 16

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
CURVATURE_SCHEMA = {
    "type": "object",
    "required": ["model", "m", "coords", "points"],
    "additionalProperties": False,
    "properties": {
        "model": {"type": "string"},
        "m": {"type": "string"},
        "coords": {"type": "array", "items": {"type": "string"}},
        "points": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": [
                    "point", "metric", "ricci", "scalar", "hessian",
                    "laplacian", "grad_norm_sq", "be_ricci", "stress",
                ],
                "properties": {
                    "point": {"type": "array", "items": {"type": "number"}},
                    "metric": _MATRIX,
                    "ricci": _MATRIX,
                    "scalar": {"type": "number"},
                    "hessian": _MATRIX,
                    "laplacian": {"type": "number"},
                    "grad_norm_sq": {"type": "number"},
                    "be_ricci": _MATRIX,
                    "stress": _MATRIX,
                },
            },
        },
    },
}


@dataclass
class RunConfig:
    command: str
    model: Optional[str] = None
    m: Optional[str] = None
    tol: Optional[float] = None
    grid: Optional[tuple] = None
    seed: int = 0
    json: bool = False
    output: Optional[str] = None
    points: Optional[str] = None
    reports: tuple = ()

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tolerance must be positive", "--tol")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative", "--seed")

    def tolerance(self) -> float:
        return self.tol if self.tol is not None else DEFAULT_TOL.get(self.command, 1e-9)


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _emit(cfg: RunConfig, text: str, payload: str) -> None:
    """Print the summary (or JSON) and write the JSON payload to ``--output``."""
    sys.stdout.write(payload if cfg.json else text)
    if cfg.output:
        Path(cfg.output).write_text(payload)


def _parse_points(text: str, chart) -> np.ndarray:
    rows = []
    for i, chunk in enumerate(text.split(";")):
        vals = [v for v in chunk.split(",") if v.strip()]
        if len(vals) != chart.dim:
            raise ConfigError(f"point needs {chart.dim} coordinates", f"--points[{i}]")
        row = []
        for v in vals:
            try:
                row.append(float(ex.evaluate(ex.parse(v, []), ())))
            except ex.ExprSyntaxError as err:
                raise ConfigError(str(err), f"--points[{i}]", err.offset) from err
        rows.append(row)
    return np.array(rows, dtype=float)


def _be_param(text: Optional[str], model) -> Optional[BEParam]:
    raw = text if text is not None else model.meta.get("m")
    if raw is None:
        return None
    try:
        return BEParam.parse(str(raw))
    except ValueError as err:
        raise ConfigError(str(err), "--m") from err


# -- commands -------------------------------------------------------------------


def cmd_check(cfg: RunConfig) -> int:
    model = load_model(cfg.model, seed=cfg.seed)
    pts = _parse_points(cfg.points, model.chart) if cfg.points else model.default_points()
    report = residual_report(model.name, model.g, model.f, pts, tol=cfg.tolerance(), m=_be_param(cfg.m, model))
    report.extra["seed"] = cfg.seed
    agg = report.aggregates
    lines = [f"model {model.name}: {len(report.records)} points"]
    for key in sorted(agg):
        mark = "ok" if agg[key] <= report.tolerances[key] else "FAIL"
        lines.append(f"  {key:<12} max {agg[key]:.3e}  tol {report.tolerances[key]:.1e}  {mark}")
    if "quasi_einstein" in report.extra:
        qe = report.extra["quasi_einstein"]
        lines.append(
            f"  quasi-Einstein m={qe['m']}: lambda {qe['best_lambda']:.6g} ({qe['label']}), "
            f"residual {qe['max_residual']:.3e}"
        )
    lines.append("PASS" if report.passed else "FAIL")
    _emit(cfg, "\n".join(lines) + "\n", report.to_json() + "\n")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_variation(cfg: RunConfig) -> int:
    model = load_model(cfg.model, seed=cfg.seed)
    chart = model.chart
    if not chart.periodic:
        raise UnsupportedDomainError("the variation check needs a fully periodic chart")
    rng = np.random.default_rng(cfg.seed)
    s, h = model.s, model.h
    if s is None or h is None:
        rs, rh = random_direction(chart, rng)
        s = rs if s is None else s
        h = rh if h is None else h
    nodes = cfg.grid or model.grid or (DEFAULT_GRID,) * chart.dim
    if len(nodes) == 1:
        nodes = tuple(nodes) * chart.dim
    if len(nodes) != chart.dim:
        raise ConfigError(f"grid needs {chart.dim} node counts", "--grid")
    inst = VariationInstance(model.g, model.f, s, h, SampleGrid(chart, nodes))
    check = sample_points(chart, CHECK_POINTS, rng)
    report = variation_report(inst, check, name=model.name, seed=cfg.seed, rel_tol=cfg.tolerance())
    lines = [
        f"model {model.name}: grid {'x'.join(map(str, nodes))}, seed {cfg.seed}",
        f"  analytic {report['total_analytic']:.12e}",
        f"  numeric  {report['total_numeric']:.12e}",
        f"  relative gap {report['relative_gap']:.3e}",
    ]
    for key in sorted(report["term_errors"]):
        mark = "ok" if report["term_pass"][key] else "FAIL"
        lines.append(f"  term {key:<17} rel {report['term_errors'][key]:.3e}  {mark}")
    lines.append("PASS" if report["pass"] else "FAIL")
    _emit(cfg, "\n".join(lines) + "\n", _dumps(report))
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def curvature_tables(model, pts: np.ndarray, m: BEParam) -> dict:
    frame = Frame.at(model.g, pts, order=2)
    fj = field_jet(frame, model.f)
    tensors = {
        "metric": frame.g.value,
        "ricci": frame.ricci.value,
        "scalar": frame.scalar.value,
        "hessian": hessian_jet(fj, frame).value,
        "laplacian": laplacian_jet(fj, frame).value,
        "grad_norm_sq": grad_norm_sq_jet(fj, frame).value,
        "be_ricci": be_ricci_jet(frame, fj, m).value,
        "stress": stress_tensor_jet(frame, fj).value,
    }
    rows = []
    for b in range(pts.shape[0]):
        row = {"point": pts[b].tolist()}
        for key, arr in tensors.items():
            v = arr[b]
            row[key] = float(v) if np.ndim(v) == 0 else v.tolist()
        rows.append(row)
    data = {"model": model.name, "m": str(m), "coords": list(model.chart.coords), "points": rows}
    jsonschema.validate(data, CURVATURE_SCHEMA)
    return data


def _format_table(name: str, value, coords) -> list[str]:
    if not isinstance(value, list):
        return [f"  {name} = {value: .9e}"]
    lines = [f"  {name}:"]
    width = max(len(c) for c in coords)
    for c, row in zip(coords, value):
        lines.append(f"    {c:>{width}} | " + " ".join(f"{x: .9e}" for x in row))
    return lines


def cmd_curvature(cfg: RunConfig) -> int:
    model = load_model(cfg.model, seed=cfg.seed)
    m = _be_param(cfg.m, model) or BEParam.infinite()
    pts = _parse_points(cfg.points, model.chart) if cfg.points else model.default_points()
    data = curvature_tables(model, pts, m)
    lines = [f"model {model.name}, m = {data['m']}"]
    for row in data["points"]:
        lines.append("point (" + ", ".join(f"{c}={x:.6g}" for c, x in zip(data["coords"], row["point"])) + ")")
        for key in ("metric", "ricci", "scalar", "hessian", "laplacian", "grad_norm_sq", "be_ricci", "stress"):
            lines.extend(_format_table(key, row[key], data["coords"]))
    _emit(cfg, "\n".join(lines) + "\n", _dumps(data))
    return EXIT_PASS


def cmd_report_merge(cfg: RunConfig) -> int:
    reports = []
    for path in cfg.reports:
        try:
            reports.append(ResidualReport.from_dict(json.loads(Path(path).read_text())))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as err:
            raise ConfigError(f"not a residual report: {err}", str(path)) from err
    merged = merge_reports(reports)
    agg = merged.aggregates
    text = f"merged {len(reports)} reports ({merged.model}): " + ", ".join(
        f"{k} {agg[k]:.3e}" for k in sorted(agg)
    )
    text += "\n" + ("PASS" if merged.passed else "FAIL") + "\n"
    _emit(cfg, text, merged.to_json() + "\n")
    return EXIT_PASS if merged.passed else EXIT_FAIL


COMMANDS = {
    "check": cmd_check,
    "variation": cmd_variation,
    "curvature": cmd_curvature,
    "report-merge": cmd_report_merge,
}


# -- argument parsing -------------------------------------------------------------


def _grid(text: str) -> tuple:
    try:
        nodes = tuple(int(k) for k in text.split(","))
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected k,k,...") from err
    if not nodes or min(nodes) < 1:
        raise argparse.ArgumentTypeError("grid node counts must be positive")
    return nodes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="befield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        if model:
            p.add_argument("--model", required=True, help="YAML model file or preset (eds:n=3, flat:n=2,f=sin(x), ...)")
            p.add_argument("--seed", type=int, default=0, help="seed for sampled points and random models")
        p.add_argument("--json", action="store_true", help="print the JSON report instead of a summary")
        p.add_argument("--output", help="write the JSON report to this path")

    p = sub.add_parser("check", help="field-equation residuals at sample points")
    common(p)
    p.add_argument("--m", help="Bakry-Emery parameter (real or inf) for the quasi-Einstein summary")
    p.add_argument("--tol", type=float)
    p.add_argument("--points", help="points as 'a,b;c,d'")

    p = sub.add_parser("variation", help="analytic vs numeric first variation of the action")
    common(p)
    p.add_argument("--tol", type=float)
    p.add_argument("--grid", type=_grid, help="node counts per axis, e.g. 64,64")

    p = sub.add_parser("curvature", help="print curvature tables at points")
    common(p)
    p.add_argument("--m", help="Bakry-Emery parameter (real or inf), default inf")
    p.add_argument("--points", help="points as 'a,b;c,d'")

    p = sub.add_parser("report-merge", help="merge residual reports")
    common(p, model=False)
    p.add_argument("reports", nargs="+")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else EXIT_PASS
    opts = vars(args)
    try:
        cfg = RunConfig(
            command=args.command,
            model=opts.get("model"),
            m=opts.get("m"),
            tol=opts.get("tol"),
            grid=opts.get("grid"),
            seed=opts.get("seed", 0),
            json=args.json,
            output=args.output,
            points=opts.get("points"),
            reports=tuple(opts.get("reports") or ()),
        )
        return COMMANDS[args.command](cfg)
    except UnsupportedDomainError as err:
        print(f"error: unsupported domain: {err}", file=sys.stderr)
        return EXIT_DOMAIN
    except MetricError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ConfigError, ex.ExprError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
