"""Warped-product space-times N x (0, inf) with g = exp(2 a(t)) gbar - dt^2.

The potential f depends on t only. For a Ricci-flat fiber the pair
a(t) = ln(t) / n, f(t) = sqrt((n - 1) / n) ln(t) solves Ric = df (x) df and
Laplacian(f) = 0; :func:`verify_solution` checks this with the general engine,
never with warped-product shortcuts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .chart import Axis, Chart, MetricField, ScalarField, sample_points
from .field_eq import ResidualReport, residual_report
from .geometry import Frame, max_abs

TIME = "t"


class NonRicciFlatFiberError(ValueError):
    pass


def _time_expr(e) -> "ex.Expr":
    return ex.parse(e, [TIME]) if isinstance(e, str) else e


@dataclass
class WarpedProductSpec:
    fiber: MetricField  # Riemannian metric on the n-dimensional fiber
    a: "ex.Expr | str"  # log of the scale factor, in t
    f: "ex.Expr | str"  # potential, in t
    t_range: tuple = (0.1, 20.0)

    def __post_init__(self):
        self.a = _time_expr(self.a)
        self.f = _time_expr(self.f)
        lo, hi = self.t_range
        if not (0 < lo < hi):
            raise ValueError(f"time range must lie in (0, inf), got {self.t_range}")
        if TIME in self.fiber.chart.coords:
            raise ValueError(f"fiber coordinates may not use the name {TIME!r}")

    @property
    def n(self) -> int:
        return self.fiber.chart.dim

    @property
    def chart(self) -> Chart:
        fc = self.fiber.chart
        return Chart(fc.coords + (TIME,), fc.axes + (Axis(*self.t_range),))

    def assemble(self) -> tuple[MetricField, ScalarField]:
        """Block metric exp(2a) gbar (+) (-dt^2) and the lifted potential."""
        chart = self.chart
        coords = chart.coords
        warp = ex.Unary("exp", ex.Binary("mul", ex.Const(2.0), ex.substitute(self.a, coords)))
        comps = {}
        n = self.n
        for i in range(n):
            for j in range(i, n):
                gb = self.fiber.component(i, j)
                if gb == ex.Const(0.0):
                    continue
                comps[(i, j)] = ex.Binary("mul", warp, ex.substitute(gb, coords))
        comps[(n, n)] = ex.Const(-1.0)
        return MetricField(chart, comps), ScalarField(chart, ex.substitute(self.f, coords))

    def time_derivatives(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Jets (value, first, second derivative) of a and f at times ``t``."""
        pts = np.asarray(t, dtype=float).reshape(-1, 1)
        a = ex.eval_jet(self.a, pts, order=2)
        f = ex.eval_jet(self.f, pts, order=2)
        pack = lambda j: np.stack([j.value, j.d1[:, 0], j.d2[:, 0, 0]])  # noqa: E731
        return pack(a), pack(f)


def warped_laplacian_formula(spec: WarpedProductSpec, t) -> np.ndarray:
    """-n a'(t) f'(t) - f''(t)."""
    a, f = spec.time_derivatives(t)
    return -spec.n * a[1] * f[1] - f[2]


def warped_ricci_flat_fiber(spec: WarpedProductSpec, t) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Ricci of the warped metric over a flat fiber.

    Returns ``(k, ric_tt)`` with Ric(X, Y) = k g(X, Y) for spatial X, Y and
    k = a'' + n a'^2, and Ric(d_t, d_t) = -n (a'' + a'^2).
    """
    a, _ = spec.time_derivatives(t)
    n = spec.n
    return a[2] + n * a[1] ** 2, -n * (a[2] + a[1] ** 2)


@dataclass
class HarmonicOdeResult:
    c: float
    residuals: np.ndarray
    degenerate: bool
    ok: bool


def harmonic_f_ode(spec: WarpedProductSpec, times: Sequence[float], tol: float = 1e-9) -> HarmonicOdeResult:
    """Check |f'(t)| = c exp(-n a(t)) with c fitted at the first sample time."""
    times = np.asarray(times, dtype=float)
    a, f = spec.time_derivatives(times)
    fp = np.abs(f[1])
    decay = np.exp(-spec.n * a[0])
    c = float(fp[0] / decay[0])
    residuals = fp - c * decay
    degenerate = bool(np.all(fp <= tol))
    scale = max(1.0, float(fp.max()))
    return HarmonicOdeResult(c, residuals, degenerate, bool(np.all(np.abs(residuals) <= tol * scale)))


@dataclass
class EdSSolution:
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("fiber dimension must be at least 2")

    @property
    def c(self) -> float:
        return math.sqrt((self.n - 1) / self.n)

    @property
    def a_text(self) -> str:
        return f"ln(t)/{self.n}"

    @property
    def f_text(self) -> str:
        return f"sqrt(({self.n} - 1)/{self.n})*ln(t)"

    def flat_fiber(self) -> MetricField:
        from .models import fiber_coords

        chart = Chart.box(fiber_coords(self.n), [(-1.0, 1.0)] * self.n)
        return MetricField.diagonal(chart, ["1"] * self.n)

    def spec(self, fiber: Optional[MetricField] = None, t_range=(0.1, 20.0), c_scale: float = 1.0) -> WarpedProductSpec:
        fiber = fiber or self.flat_fiber()
        f = self.f_text if c_scale == 1.0 else f"{c_scale!r}*{self.f_text}"
        return WarpedProductSpec(fiber, self.a_text, f, t_range)


def check_ricci_flat(fiber: MetricField, points, tol: float = 1e-10) -> float:
    ric = Frame.at(fiber, points, order=2).ricci.value
    worst = float(max_abs(ric).max())
    if worst > tol:
        raise NonRicciFlatFiberError(f"fiber Ricci reaches {worst:.3e} > {tol:g}")
    return worst


def verify_solution(
    sol: EdSSolution,
    fiber: Optional[MetricField] = None,
    times: Sequence[float] = (0.5, 1.0, 2.0, 10.0),
    per_time: int = 25,
    seed: int = 0,
    tol: float = 1e-9,
    c_scale: float = 1.0,
) -> ResidualReport:
    """Field-equation residuals of the assembled solution at sampled (p, t).

    The report also records ``ric_tt_gap`` = |Ric(d_t, d_t) - f'(t)^2|.
    """
    fiber = fiber or sol.flat_fiber()
    rng = np.random.default_rng(seed)
    spatial = sample_points(fiber.chart, per_time, rng)
    check_ricci_flat(fiber, spatial)
    t_hi = max(times) * 2
    spec = sol.spec(fiber, t_range=(min(times) / 2, t_hi), c_scale=c_scale)
    g, f = spec.assemble()
    pts = np.vstack([np.hstack([spatial, np.full((per_time, 1), float(t))]) for t in times])
    report = residual_report(f"eds:n={sol.n}", g, f, pts, tol=tol)
    frame = Frame.at(g, pts, order=2)
    fprime = frame.field(f).d1[:, -1]
    gap = np.abs(frame.ricci.value[:, -1, -1] - fprime**2)
    for rec, v in zip(report.records, gap):
        rec["norms"]["ric_tt_gap"] = float(v)
    report.tolerances["ric_tt_gap"] = tol
    return report
