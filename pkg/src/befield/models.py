"""Named model presets and seeded random model generators."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chart import Chart, MetricField, ScalarField, SymTensorField, lattice_points, sample_points


@dataclass
class Model:
    name: str
    chart: Chart
    g: MetricField
    f: ScalarField
    s: Optional[SymTensorField] = None
    h: Optional[ScalarField] = None
    grid: Optional[tuple] = None
    points: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def has_perturbation(self) -> bool:
        return self.s is not None or self.h is not None

    def default_points(self) -> np.ndarray:
        if self.points is not None:
            return self.points
        per_axis = max(2, int(round(64 ** (1.0 / self.chart.dim))))
        return lattice_points(self.chart, per_axis)


def fiber_coords(n: int) -> list[str]:
    return ["x", "y", "z"][:n] if n <= 3 else [f"x{i}" for i in range(1, n + 1)]


# -- presets ------------------------------------------------------------------


EDS_TIMES = (0.5, 1.0, 2.0, 10.0)


def eds_model(n: int, times=EDS_TIMES, per_time: int = 25, seed: int = 0) -> Model:
    """Flat fiber of dimension n warped by t^(2/n), potential sqrt((n-1)/n) ln t."""
    from .cosmology import EdSSolution

    sol = EdSSolution(n)
    spec = sol.spec()
    g, f = spec.assemble()
    rng = np.random.default_rng(seed)
    fiber = spec.fiber.chart
    pts = []
    for t in times:
        spatial = sample_points(fiber, per_time, rng)
        pts.append(np.hstack([spatial, np.full((per_time, 1), float(t))]))
    return Model(f"eds:n={n}", g.chart, g, f, points=np.vstack(pts), meta={"n": n, "c": sol.c})


def minkowski_model(n: int = 4) -> Model:
    coords = ["t"] + fiber_coords(n - 1)
    chart = Chart.box(coords, [(-1.0, 1.0)] * n)
    g = MetricField.diagonal(chart, ["-1"] + ["1"] * (n - 1))
    pts = np.vstack([np.zeros(n), lattice_points(chart, 2)])
    return Model(f"minkowski:n={n}", chart, g, ScalarField.parse(chart, "0"), points=pts)


def flat_model(n: int = 2, f: str = "0") -> Model:
    coords = fiber_coords(n)
    chart = Chart.box(coords, [(0.0, 2 * math.pi)] * n, periodic=True)
    g = MetricField.diagonal(chart, ["1"] * n)
    return Model(f"flat:n={n}", chart, g, ScalarField.parse(chart, f))


def sphere_model(n: int = 2) -> Model:
    """Unit round n-sphere in hyperspherical angles (poles excluded)."""
    coords = [f"a{i}" for i in range(1, n + 1)] if n > 2 else ["th", "ph"]
    ranges = [(0.2, math.pi - 0.2)] * (n - 1) + [(0.0, 2 * math.pi)]
    chart = Chart.box(coords, ranges)
    entries = ["1"]
    for i in range(1, n):
        entries.append("*".join(f"sin({c})^2" for c in coords[:i]))
    g = MetricField.diagonal(chart, entries)
    return Model(f"sphere:n={n}", chart, g, ScalarField.parse(chart, "0"))


# -- random generators ----------------------------------------------------------


def _num(x: float) -> str:
    return f"{x:.6g}"


def _wave(rng: np.random.Generator, coords, integer: bool) -> str:
    n = len(coords)
    while True:
        k = rng.integers(-1, 2, size=n) if integer else np.round(rng.uniform(-1.2, 1.2, size=n), 3)
        if np.any(k != 0):
            break
    phase = rng.uniform(0, 2 * math.pi)
    terms = [f"{_num(kk)}*{c}" for kk, c in zip(k, coords) if kk != 0]
    return " + ".join(terms) + f" + {_num(phase)}"


def random_metric_entries(rng, coords, periodic: bool, lorentzian: bool = False) -> dict:
    """Diagonally dominant metric components (positive definite, or one timelike axis)."""
    n = len(coords)
    off_amp = 0.25 / max(1, n - 1)
    comps = {}
    for i in range(n):
        for j in range(i, n):
            if i == j:
                amp = rng.uniform(-0.2, 0.2)
                fn = "sin" if rng.random() < 0.5 else "cos"
                entry = f"1 + {_num(amp)}*{fn}({_wave(rng, coords, periodic)})"
                if lorentzian and i == 0:
                    entry = f"-({entry})"
            else:
                amp = rng.uniform(-off_amp, off_amp)
                entry = f"{_num(amp)}*cos({_wave(rng, coords, periodic)})"
            comps[(i, j)] = entry
    return comps


def random_scalar(rng, coords, periodic: bool, terms: int = 2) -> str:
    parts = []
    for _ in range(terms):
        amp = rng.uniform(-1.0, 1.0)
        fn = "sin" if rng.random() < 0.5 else "cos"
        parts.append(f"{_num(amp)}*{fn}({_wave(rng, coords, periodic)})")
    if not periodic:
        a, b = rng.uniform(-0.5, 0.5, size=2)
        parts.append(f"{_num(a)}*exp({_num(b)}*{coords[0]})")
        parts.append(f"{_num(rng.uniform(-0.5, 0.5))}*{coords[-1]}*{coords[0]}")
    return " + ".join(parts)


def random_analytic_model(n: int, rng: np.random.Generator, lorentzian: bool = False) -> Model:
    """Smooth non-periodic (g, f) on the box (-1, 1)^n."""
    coords = fiber_coords(n)
    chart = Chart.box(coords, [(-1.0, 1.0)] * n)
    g = MetricField(chart, random_metric_entries(rng, coords, periodic=False, lorentzian=lorentzian))
    f = ScalarField.parse(chart, random_scalar(rng, coords, periodic=False))
    return Model(f"random:n={n}", chart, g, f)


def random_direction(chart: Chart, rng: np.random.Generator) -> tuple[SymTensorField, ScalarField]:
    """Smooth periodic perturbation direction (s, h) on a periodic chart."""
    scaled = _periodic_arguments(chart)
    s_comps = {}
    n = chart.dim
    for i in range(n):
        for j in range(i, n):
            amp = rng.uniform(-0.5, 0.5)
            fn = "sin" if rng.random() < 0.5 else "cos"
            s_comps[(i, j)] = f"{_num(amp)}*{fn}({_wave(rng, scaled, True)})"
    s = SymTensorField(chart, s_comps)
    h = ScalarField.parse(chart, random_scalar(rng, scaled, periodic=True, terms=1))
    return s, h


def _periodic_arguments(chart: Chart) -> list[str]:
    """Coordinate expressions rescaled so integer wave numbers are periodic on the chart."""
    out = []
    for c, ax in zip(chart.coords, chart.axes):
        scale = 2 * math.pi / ax.length
        out.append(c if abs(scale - 1.0) < 1e-15 else f"({scale!r}*{c})")
    return out


def random_torus_model(
    n: int, rng: np.random.Generator, nodes: int = 64, lorentzian: bool = False
) -> Model:
    """Smooth periodic (g, f) with a smooth perturbation direction (s, h)."""
    coords = fiber_coords(n)
    chart = Chart.torus(coords)
    g = MetricField(chart, random_metric_entries(rng, coords, periodic=True, lorentzian=lorentzian))
    f = ScalarField.parse(chart, random_scalar(rng, coords, periodic=True))
    s, h = random_direction(chart, rng)
    return Model(f"torus:n={n}", chart, g, f, s, h, grid=(nodes,) * n)


# -- preset names ---------------------------------------------------------------

_PRESET = re.compile(r"^(?P<kind>[a-z]+)(?::(?P<args>.*))?$")


class PresetError(ValueError):
    pass


def parse_preset_args(text: Optional[str]) -> dict:
    args = {}
    if not text:
        return args
    for part in text.split(","):
        if "=" not in part:
            raise PresetError(f"bad preset argument {part!r}; expected key=value")
        k, v = part.split("=", 1)
        args[k.strip()] = v.strip()
    return args


def load_preset(name: str, seed: int = 0) -> Model:
    """Build a model from a preset name such as ``eds:n=3`` or ``torus:n=2``."""
    m = _PRESET.match(name.strip())
    if not m:
        raise PresetError(f"unknown preset {name!r}")
    kind = m.group("kind")
    args = parse_preset_args(m.group("args"))
    try:
        n = int(args.pop("n", 3 if kind == "eds" else 2 if kind != "minkowski" else 4))
    except ValueError as err:
        raise PresetError(f"bad dimension in preset {name!r}") from err
    if kind == "eds":
        if n < 2:
            raise PresetError("eds preset needs n >= 2")
        model = eds_model(n, seed=seed)
    elif kind == "minkowski":
        model = minkowski_model(n)
    elif kind == "flat":
        model = flat_model(n, args.pop("f", "0"))
    elif kind == "sphere":
        model = sphere_model(n)
    elif kind == "torus":
        lorentzian = args.pop("lorentzian", "0") in ("1", "true", "yes")
        nodes = int(args.pop("nodes", 64))
        model = random_torus_model(n, np.random.default_rng(seed), nodes=nodes, lorentzian=lorentzian)
    else:
        raise PresetError(f"unknown preset kind {kind!r}")
    if args:
        raise PresetError(f"unknown preset arguments {sorted(args)}")
    return model
