"""YAML model files.

A model file declares a chart, a metric, a potential and optionally a
perturbation direction, an integration grid and sample points::

    name: flat-sin
    chart:
      coords: [x, y]
      ranges: [[0, 2*pi], [0, 2*pi]]
      periodic: true
    constants: {c: 0.5}
    metric:
      diagonal: ["1", "1"]
    scalar: c*sin(x)
    perturbation:
      s: {"x,x": "cos(y)", "x,y": "0.1*sin(x)"}
      h: sin(x + y)
    grid: [32, 32]
    points: [[0.1, 0.2], [1.0, 2.0]]

Metric and perturbation components are keyed ``"a,b"`` by coordinate names;
``diagonal`` is a shortcut for diagonal metrics. Range bounds and point
coordinates may be constant expressions.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import expr as ex
from .chart import Chart, MetricField, ScalarField, SymTensorField
from .models import Model, PresetError, load_preset

TOP_KEYS = {"name", "chart", "constants", "metric", "scalar", "perturbation", "grid", "points", "m", "lambda"}
CHART_KEYS = {"coords", "ranges", "periodic"}
PERTURBATION_KEYS = {"s", "h"}


class ConfigError(ValueError):
    """Invalid model configuration; ``where`` names the offending entry."""

    def __init__(self, message: str, where: str = "", offset: Optional[int] = None):
        loc = where
        if offset is not None:
            loc = f"{where} (offset {offset})" if where else f"offset {offset}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.where = where
        self.offset = offset


def _require_mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"expected a mapping, got {type(value).__name__}", where)
    return value


def _check_keys(block: dict, allowed: set, where: str) -> None:
    unknown = sorted(str(k) for k in set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}; allowed {sorted(allowed)}", where)


def _constant(value, constants: dict, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError("expected a number", where)
    if isinstance(value, (int, float)):
        return float(value)
    try:
        e = ex.parse(str(value), [], constants)
        return float(ex.evaluate(e, ()))
    except ex.ExprSyntaxError as err:
        raise ConfigError(str(err).rsplit(" at offset", 1)[0], where, err.offset) from err
    except (ex.ExprError, ZeroDivisionError, ValueError) as err:
        raise ConfigError(str(err), where) from err


def _expression(chart: Chart, text, constants: dict, where: str) -> "ex.Expr":
    try:
        e = chart.parse(str(text) if not isinstance(text, (int, float)) else text, constants)
    except ex.ExprSyntaxError as err:
        raise ConfigError(str(err).rsplit(" at offset", 1)[0], where, err.offset) from err
    return e


def _components(chart: Chart, block, constants: dict, where: str) -> dict:
    block = _require_mapping(block, where)
    if "diagonal" in block:
        if len(block) != 1:
            raise ConfigError("'diagonal' cannot be combined with explicit components", where)
        entries = block["diagonal"]
        if not isinstance(entries, list) or len(entries) != chart.dim:
            raise ConfigError(f"diagonal needs {chart.dim} entries", f"{where}.diagonal")
        return {(i, i): _expression(chart, e, constants, f"{where}.diagonal[{i}]") for i, e in enumerate(entries)}
    out = {}
    for key, value in block.items():
        parts = [p.strip() for p in str(key).split(",")]
        if len(parts) != 2 or any(p not in chart.coords for p in parts):
            raise ConfigError(f"bad component key {key!r}; expected 'a,b' with coordinates {list(chart.coords)}", where)
        i, j = chart.coords.index(parts[0]), chart.coords.index(parts[1])
        k = (min(i, j), max(i, j))
        if k in out:
            raise ConfigError(f"component {key!r} given twice", where)
        out[k] = _expression(chart, value, constants, f"{where}.{key}")
    return out


def _chart(block, constants: dict) -> Chart:
    block = _require_mapping(block, "chart")
    _check_keys(block, CHART_KEYS, "chart")
    coords = block.get("coords")
    if not isinstance(coords, list) or not all(isinstance(c, str) for c in coords):
        raise ConfigError("coords must be a list of names", "chart.coords")
    ranges = block.get("ranges")
    if ranges is not None:
        if not isinstance(ranges, list) or len(ranges) != len(coords):
            raise ConfigError(f"need one range per coordinate ({len(coords)})", "chart.ranges")
        parsed = []
        for i, r in enumerate(ranges):
            if not isinstance(r, list) or len(r) != 2:
                raise ConfigError("range must be [lo, hi]", f"chart.ranges[{i}]")
            parsed.append(tuple(_constant(v, constants, f"chart.ranges[{i}][{k}]") for k, v in enumerate(r)))
        ranges = parsed
    periodic = block.get("periodic", False)
    try:
        if ranges is None and periodic is True:
            return Chart.torus(coords)
        return Chart.box(coords, ranges, periodic)
    except ValueError as err:
        raise ConfigError(str(err), "chart") from err


def model_from_dict(data: Any, source: str = "<config>") -> Model:
    data = _require_mapping(data, source)
    _check_keys(data, TOP_KEYS, source)
    for key in ("chart", "metric", "scalar"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}", source)
    constants = {}
    for name, value in _require_mapping(data.get("constants") or {}, "constants").items():
        constants[str(name)] = _constant(value, constants, f"constants.{name}")
    chart = _chart(data["chart"], constants)
    try:
        g = MetricField(chart, _components(chart, data["metric"], constants, "metric"))
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err), "metric") from err
    f = ScalarField(chart, _expression(chart, data["scalar"], constants, "scalar"))
    s = h = None
    if data.get("perturbation") is not None:
        pert = _require_mapping(data["perturbation"], "perturbation")
        _check_keys(pert, PERTURBATION_KEYS, "perturbation")
        if "s" in pert:
            s = SymTensorField(chart, _components(chart, pert["s"], constants, "perturbation.s"))
        if "h" in pert:
            h = ScalarField(chart, _expression(chart, pert["h"], constants, "perturbation.h"))
    grid = None
    if data.get("grid") is not None:
        grid = data["grid"]
        if isinstance(grid, int):
            grid = [grid] * chart.dim
        if not isinstance(grid, list) or len(grid) != chart.dim or not all(isinstance(k, int) and k > 0 for k in grid):
            raise ConfigError(f"grid needs {chart.dim} positive node counts", "grid")
        grid = tuple(grid)
    points = None
    if data.get("points") is not None:
        raw = data["points"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("points must be a non-empty list", "points")
        rows = []
        for i, p in enumerate(raw):
            if not isinstance(p, list) or len(p) != chart.dim:
                raise ConfigError(f"point needs {chart.dim} coordinates", f"points[{i}]")
            rows.append([_constant(v, constants, f"points[{i}][{k}]") for k, v in enumerate(p)])
        points = np.array(rows, dtype=float)
    meta = {}
    if "m" in data:
        meta["m"] = data["m"]
    if "lambda" in data:
        meta["lambda"] = _constant(data["lambda"], constants, "lambda")
    return Model(str(data.get("name", source)), chart, g, f, s, h, grid, points, meta)


def load_config(path) -> Model:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read model file: {err.strerror}", str(path)) from err
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigError(getattr(err, "problem", None) or "invalid YAML", where, mark.index if mark else None) from err
    return model_from_dict(data, path.name)


def load_model(source: str, seed: int = 0) -> Model:
    """A model from a YAML path or a preset name such as ``eds:n=3``."""
    if Path(source).suffix in (".yaml", ".yml") or Path(source).exists():
        return load_config(source)
    try:
        return load_preset(source, seed=seed)
    except PresetError as err:
        raise ConfigError(str(err), source) from err
