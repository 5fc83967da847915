"""Coordinate charts and the fields, sample sets and grids that live on them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from . import expr as ex
from .jets import MAX_ORDER, Jet

DET_THRESHOLD = 1e-10


class MetricError(ValueError):
    pass


class SingularMetricError(MetricError):
    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = None if point is None else tuple(float(x) for x in point)


class SignatureChangeError(MetricError):
    pass


class UnsupportedDomainError(ValueError):
    """Raised when an operation needs a fully periodic chart and does not get one."""


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    periodic: bool = False

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Chart:
    coords: tuple[str, ...]
    axes: tuple[Axis, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.coords) < 2:
            raise ValueError(f"chart dimension must be at least 2, got {len(self.coords)}")
        if len(set(self.coords)) != len(self.coords):
            raise ValueError(f"coordinate names must be distinct: {self.coords}")
        if len(self.axes) != len(self.coords):
            raise ValueError("one axis per coordinate required")
        for name, ax in zip(self.coords, self.axes):
            if not ax.hi > ax.lo:
                raise ValueError(f"empty range for coordinate {name!r}")

    @classmethod
    def box(cls, coords: Sequence[str], ranges=None, periodic: bool | Sequence[bool] = False) -> "Chart":
        n = len(coords)
        if ranges is None:
            ranges = [(-1.0, 1.0)] * n
        if isinstance(periodic, bool):
            periodic = [periodic] * n
        return cls(tuple(coords), tuple(Axis(float(lo), float(hi), bool(p)) for (lo, hi), p in zip(ranges, periodic)))

    @classmethod
    def torus(cls, coords: Sequence[str]) -> "Chart":
        return cls.box(coords, [(0.0, 2 * np.pi)] * len(coords), periodic=True)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def periodic(self) -> bool:
        return all(ax.periodic for ax in self.axes)

    def parse(self, text: Union[str, float, "ex.Expr"], constants: Mapping[str, float] | None = None) -> "ex.Expr":
        if isinstance(text, (int, float)):
            return ex.Const(float(text))
        if not isinstance(text, str):
            return text
        return ex.parse(text, self.coords, constants)


def _to_expr(chart: Chart, value, constants=None) -> "ex.Expr":
    e = chart.parse(value, constants)
    unknown = ex.variables(e) - set(chart.coords)
    if unknown:
        raise ValueError(f"expression uses undeclared coordinates {sorted(unknown)}")
    return e


class _SymmetricField:
    """n x n symmetric matrix of expressions, stored upper-triangular."""

    def __init__(self, chart: Chart, components, constants=None):
        self.chart = chart
        n = chart.dim
        self._upper: dict[tuple[int, int], ex.Expr] = {}
        zero = ex.Const(0.0)
        given = _normalize_components(chart, components)
        for (i, j), value in given.items():
            key = (min(i, j), max(i, j))
            if key in self._upper and (i, j) != key:
                raise ValueError(f"component {chart.coords[i]},{chart.coords[j]} given twice")
            self._upper[key] = _to_expr(chart, value, constants)
        for i in range(n):
            for j in range(i, n):
                self._upper.setdefault((i, j), zero)

    def component(self, i: int, j: int) -> "ex.Expr":
        return self._upper[(min(i, j), max(i, j))]

    def matrix(self) -> list[list["ex.Expr"]]:
        n = self.chart.dim
        return [[self.component(i, j) for j in range(n)] for i in range(n)]

    def jet(self, points, order: int = MAX_ORDER) -> Jet:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        batch, n = pts.shape
        if n != self.chart.dim:
            raise ValueError(f"points have dimension {n}, chart has {self.chart.dim}")
        arrays = [np.zeros((batch,) + (n,) * k + (n, n)) for k in range(order + 1)]
        cache: dict = {}
        for (i, j), e in self._upper.items():
            if isinstance(e, ex.Const) and e.value == 0.0:
                continue
            if e not in cache:
                cache[e] = ex.eval_jet(e, pts, order).arrays()
            for k, a in enumerate(cache[e]):
                arrays[k][..., i, j] = a
                arrays[k][..., j, i] = a
        return Jet(arrays[0], arrays[1:])

    def __repr__(self) -> str:
        n = self.chart.dim
        comps = ", ".join(
            f"{self.chart.coords[i]}{self.chart.coords[j]}={ex.to_string(self.component(i, j))}"
            for i in range(n)
            for j in range(i, n)
            if self.component(i, j) != ex.Const(0.0)
        )
        return f"{type(self).__name__}({comps})"


def _normalize_components(chart: Chart, components) -> dict:
    n = chart.dim
    if isinstance(components, Mapping):
        out = {}
        for key, value in components.items():
            if isinstance(key, str):
                parts = [p.strip() for p in key.split(",")]
                if len(parts) != 2 or any(p not in chart.coords for p in parts):
                    raise ValueError(f"bad component key {key!r}; expected 'a,b' with chart coordinates")
                key = (chart.coords.index(parts[0]), chart.coords.index(parts[1]))
            out[tuple(key)] = value
        return out
    rows = list(components)
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"expected an {n}x{n} component matrix")
    out = {}
    for i in range(n):
        for j in range(i, n):
            a, b = rows[i][j], rows[j][i]
            if isinstance(a, str) and isinstance(b, str) and a.replace(" ", "") != b.replace(" ", ""):
                raise ValueError(f"component matrix is not symmetric at ({i},{j})")
            out[(i, j)] = a
    return out


class MetricField(_SymmetricField):
    """Metric components on a chart; any signature."""

    @classmethod
    def diagonal(cls, chart: Chart, entries: Sequence, constants=None) -> "MetricField":
        return cls(chart, {(i, i): e for i, e in enumerate(entries)}, constants)


class SymTensorField(_SymmetricField):
    """Symmetric covariant 2-tensor field (e.g. a metric perturbation)."""


@dataclass(frozen=True)
class ScalarField:
    chart: Chart
    expression: "ex.Expr"

    @classmethod
    def parse(cls, chart: Chart, text, constants=None) -> "ScalarField":
        return cls(chart, _to_expr(chart, text, constants))

    def jet(self, points, order: int = MAX_ORDER) -> Jet:
        return ex.eval_jet(self.expression, points, order)


def metric_jet(g: MetricField, p, order: int = MAX_ORDER) -> Jet:
    """Metric components with derivatives at ``p`` (one point or a batch)."""
    return g.jet(p, order)


def _signature(values: np.ndarray) -> tuple[int, int]:
    eig = np.linalg.eigvalsh(values)
    return int(np.sum(eig > 0)), int(np.sum(eig < 0))


def check_nondegenerate(g: MetricField, pts) -> tuple[int, int]:
    """Common signature ``(#positive, #negative)`` of ``g`` over ``pts``.

    Raises :class:`SignatureChangeError` if the signature varies between
    nondegenerate points and :class:`SingularMetricError` if ``|det g|`` drops
    below the threshold anywhere.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one sample point")
    values = g.jet(pts, order=0).value
    dets = np.linalg.det(values)
    ok = np.abs(dets) >= DET_THRESHOLD
    sigs = {_signature(values[k]) for k in np.flatnonzero(ok)}
    if len(sigs) > 1:
        raise SignatureChangeError(f"metric signature changes across sample points: {sorted(sigs)}")
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise SingularMetricError(f"|det g| = {abs(dets[bad]):.3e} below {DET_THRESHOLD:g}", pts[bad])
    return sigs.pop()


@dataclass
class SampleGrid:
    """Uniform product grid with product-rule quadrature weights.

    Periodic axes use N equispaced nodes without the duplicated endpoint;
    open axes use cell midpoints. Either way the weights sum to the
    coordinate volume of the box.
    """

    chart: Chart
    nodes: tuple[int, ...]
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = tuple(int(k) for k in self.nodes)
        if len(self.nodes) != self.chart.dim or min(self.nodes) < 1:
            raise ValueError(f"need one positive node count per axis, got {self.nodes}")
        axes_nodes = []
        cell = 1.0
        for ax, k in zip(self.chart.axes, self.nodes):
            h = ax.length / k
            offset = 0.0 if ax.periodic else 0.5 * h
            axes_nodes.append(ax.lo + offset + h * np.arange(k))
            cell *= h
        mesh = np.meshgrid(*axes_nodes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=-1)
        self.weights = np.full(self.points.shape[0], cell)

    @property
    def periodic(self) -> bool:
        return self.chart.periodic

    def require_periodic(self) -> None:
        if not self.periodic:
            open_axes = [c for c, ax in zip(self.chart.coords, self.chart.axes) if not ax.periodic]
            raise UnsupportedDomainError(f"integration needs a fully periodic chart; open axes: {open_axes}")

    def integrate(self, values: np.ndarray) -> float:
        self.require_periodic()
        return float(np.dot(self.weights, values))

    def chunks(self, size: int):
        for start in range(0, self.points.shape[0], size):
            yield slice(start, min(start + size, self.points.shape[0]))


def sample_points(chart: Chart, count: int, rng: np.random.Generator, margin: float = 0.1) -> np.ndarray:
    """Uniform random points in the chart box, kept ``margin`` (relative) from open edges."""
    lo = np.array([ax.lo + (0 if ax.periodic else margin * ax.length) for ax in chart.axes])
    hi = np.array([ax.hi - (0 if ax.periodic else margin * ax.length) for ax in chart.axes])
    return lo + (hi - lo) * rng.random((count, chart.dim))


def lattice_points(chart: Chart, per_axis: int) -> np.ndarray:
    """Interior lattice (cell midpoints) with ``per_axis`` nodes on every axis."""
    axes = [ax.lo + (np.arange(per_axis) + 0.5) * ax.length / per_axis for ax in chart.axes]
    return np.array(list(itertools.product(*axes)))
