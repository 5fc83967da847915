"""First variation of the weighted Hilbert action on periodic charts.

The action is the quadrature of (R + Laplacian f - |grad f|^2) sqrt|det g| over
a periodic product grid. Along (g + t s, f + t h) its derivative at t = 0 is
computed two ways:

* analytically, from the integrand
  <-Ric + R g/2 + df (x) df - |grad f|^2 g/2, s> + 2 Laplacian(f) h;
* numerically, by Richardson-extrapolated central differences of the action.

Each pointwise variation formula (volume, |grad f|^2, Christoffel symbols,
Laplacian, scalar curvature) has a finite-difference counterpart that
differentiates the engine's own value at g + t s, f + t h.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets
from .chart import (
    DET_THRESHOLD,
    MetricField,
    SampleGrid,
    ScalarField,
    SignatureChangeError,
    SingularMetricError,
    SymTensorField,
)
from .geometry import (
    Frame,
    cov_deriv_sym2,
    div_sym2_jet,
    div_vector_jet,
    grad_norm_sq_jet,
    inner,
    laplacian_jet,
    max_abs,
    raise_index,
    ricci_values,
    scalar_invariants,
    trace2,
)
from .jets import MAX_ORDER, Jet

DEFAULT_STEPS = (1e-2, 5e-3, 2.5e-3)
CHUNK = 4096


# -- numeric differentiation ------------------------------------------------------


def richardson(steps: Sequence[float], estimates: Sequence) -> np.ndarray:
    """Extrapolate central-difference estimates to zero step.

    Central differences have an error series in even powers of the step, so
    Neville extrapolation is done in the variable step**2.
    """
    x = [float(h) ** 2 for h in steps]
    p = [np.asarray(e, dtype=float) for e in estimates]
    k = len(p)
    for m in range(1, k):
        for i in range(k - m):
            p[i] = (x[i] * p[i + 1] - x[i + m] * p[i]) / (x[i] - x[i + m])
    return p[0]


def central_derivative(func: Callable[[float], np.ndarray], steps: Sequence[float] = DEFAULT_STEPS) -> np.ndarray:
    estimates = [(np.asarray(func(h)) - np.asarray(func(-h))) / (2 * h) for h in steps]
    return richardson(steps, estimates)


# -- perturbed pairs --------------------------------------------------------------


class Perturbation:
    """Jets of (g, f) and of a direction (s, h) at a batch of points."""

    def __init__(self, g, f, s=None, h=None, points=None, metric_order: int = 2, field_order: int = MAX_ORDER):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self.points = pts
        n = pts.shape[1]
        batch = pts.shape[0]
        self.g = g.jet(pts, metric_order)
        self.f = _scalar_jet(f, pts, field_order, batch, n)
        self.s = s.jet(pts, field_order) if s is not None else Jet.constant(np.zeros((n, n)), batch, n, field_order)
        self.h = _scalar_jet(h, pts, field_order, batch, n)
        self._s_metric = self.s.truncate(metric_order)
        self._pts = pts

    @cached_property
    def _frame(self) -> Frame:
        return Frame(self.g, self._pts)

    @property
    def frame(self) -> Frame:
        return self._frame

    def g_at(self, t: float) -> Jet:
        return self.g if t == 0.0 else self.g + t * self._s_metric

    def frame_at(self, t: float) -> Frame:
        return self._frame if t == 0.0 else Frame(self.g_at(t), self.points)

    def f_at(self, t: float) -> Jet:
        return self.f if t == 0.0 else self.f + t * self.h


def _scalar_jet(f, pts, order, batch, n) -> Jet:
    if f is None:
        return Jet.constant(0.0, batch, n, order)
    if isinstance(f, Jet):
        return f
    expr = f.expression if isinstance(f, ScalarField) else f
    from .expr import eval_jet

    return eval_jet(expr, pts, order)


# -- analytic pointwise terms -----------------------------------------------------


def _dfdf(fj: Jet) -> Jet:
    df = fj.grad()
    return jets.einsum("i,j->ij", df, df)


def _delta_volume(pp: Perturbation) -> np.ndarray:
    return 0.5 * inner(pp.frame.g.value, pp.s.value, pp.frame)


def _delta_grad_norm(pp: Perturbation) -> np.ndarray:
    fr = pp.frame
    grad_f = raise_index(pp.f.grad().value, fr)
    return -inner(pp.s.value, _dfdf(pp.f).value, fr) + 2.0 * np.einsum("bi,bi->b", pp.h.grad().value, grad_f)


def _christoffel_variation(pp: Perturbation) -> np.ndarray:
    fr = pp.frame
    cov = cov_deriv_sym2(pp.s, fr).value  # cov[i, j, l] = (nabla_i s)_jl
    low = 0.5 * (
        np.einsum("bijl->blij", cov) + np.einsum("bjil->blij", cov) - np.einsum("blij->blij", cov)
    )
    return np.einsum("bkl,blij->bkij", fr.g_inv.value, low)


def _div_s_raised(pp: Perturbation) -> Jet:
    return raise_index(div_sym2_jet(pp.s, pp.frame), pp.frame)


def _grad_trace_s(pp: Perturbation) -> Jet:
    return raise_index(trace2(pp.s, pp.frame).grad(), pp.frame)


def _x_vector(pp: Perturbation) -> Jet:
    return _div_s_raised(pp) - _grad_trace_s(pp)


def _delta_laplacian(pp: Perturbation, reading: str = "h") -> np.ndarray:
    fr = pp.frame
    if reading == "h":
        lead = laplacian_jet(pp.h, fr).value
    elif reading == "f":
        lead = laplacian_jet(pp.f, fr).value
    else:
        raise ValueError("reading must be 'h' or 'f'")
    grad_f = raise_index(pp.f.grad(), fr)
    s_grad_f = raise_index(jets.einsum("ab,b->a", pp.s, grad_f), fr)
    div_term = div_vector_jet(s_grad_f, fr).value
    grad_tr = trace2(pp.s, fr).grad().value
    pairing = np.einsum("bi,bi->b", grad_tr, grad_f.value)
    return lead - div_term + 0.5 * pairing


@dataclass
class ScalarCurvatureVariation:
    minus_s_ric: np.ndarray  # -<s, Ric>
    X: np.ndarray  # div(s)^sharp - grad tr(s)
    div_X: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.minus_s_ric + self.div_X


def _delta_scalar_curvature(pp: Perturbation) -> ScalarCurvatureVariation:
    fr = pp.frame
    X = _x_vector(pp)
    return ScalarCurvatureVariation(
        -inner(pp.s.value, fr.ricci.value, fr), X.value, div_vector_jet(X, fr).value
    )


@dataclass
class YVector:
    contraction: np.ndarray  # g^{ij} A^k_ij
    identity: np.ndarray  # div(s)^k - grad(tr s)^k / 2
    gap: float


def _y_vector(pp: Perturbation) -> YVector:
    A = _christoffel_variation(pp)
    contraction = np.einsum("bij,bkij->bk", pp.frame.g_inv.value, A)
    identity = _div_s_raised(pp).value - 0.5 * _grad_trace_s(pp).value
    return YVector(contraction, identity, float(np.abs(contraction - identity).max(initial=0.0)))


# -- public pointwise API ---------------------------------------------------------


def _pp(g, f=None, s=None, h=None, p=None) -> Perturbation:
    return Perturbation(g, f, s, h, p)


def delta_volume(g: MetricField, s: SymTensorField, p) -> np.ndarray:
    """<g, s>/2, the factor multiplying dV_g in the derivative of the volume form."""
    return _delta_volume(_pp(g, s=s, p=p))


def delta_grad_norm(g: MetricField, f, s: SymTensorField, h, p) -> np.ndarray:
    """-<s, df (x) df> + 2 <grad h, grad f>."""
    return _delta_grad_norm(_pp(g, f, s, h, p))


def christoffel_variation(g: MetricField, s: SymTensorField, p) -> np.ndarray:
    """A^k_ij = g^{kl} (nabla_i s_jl + nabla_j s_il - nabla_l s_ij) / 2."""
    return _christoffel_variation(_pp(g, s=s, p=p))


def y_vector(g: MetricField, s: SymTensorField, p) -> YVector:
    return _y_vector(_pp(g, s=s, p=p))


def delta_laplacian(g: MetricField, f, s: SymTensorField, h, p, reading: str = "h") -> np.ndarray:
    """Laplacian(h) - div(s(grad f)) + <grad tr s, grad f>/2.

    ``reading="f"`` puts Laplacian(f) in the leading slot instead; it exists so
    the finite-difference check can show which reading is the derivative.
    """
    return _delta_laplacian(_pp(g, f, s, h, p), reading)


def delta_scalar_curvature(g: MetricField, s: SymTensorField, p) -> ScalarCurvatureVariation:
    """-<s, Ric> and X = div(s) - grad tr(s), whose divergence completes dR."""
    return _delta_scalar_curvature(_pp(g, s=s, p=p))


# -- finite-difference counterparts ----------------------------------------------


def fd_terms(pp: Perturbation, steps: Sequence[float] = DEFAULT_STEPS) -> dict:
    """Numeric t-derivatives of the engine's quantities along (s, h)."""
    base_vol = pp.frame.sqrt_det.value

    def quantities(t):
        fr = pp.frame_at(t)
        ft = pp.f_at(t)
        return {
            "volume": fr.sqrt_det.value / base_vol,
            "grad_norm": grad_norm_sq_jet(ft, fr).value,
            "christoffel": fr.gamma.value,
            "laplacian": laplacian_jet(ft, fr).value,
            "scalar_curvature": fr.scalar.value,
        }

    plus_minus = [(quantities(h), quantities(-h)) for h in steps]
    out = {}
    for key in plus_minus[0][0]:
        estimates = [(qp[key] - qm[key]) / (2 * h) for h, (qp, qm) in zip(steps, plus_minus)]
        out[key] = richardson(steps, estimates)
    return out


def analytic_terms(pp: Perturbation, reading: str = "h") -> dict:
    return {
        "volume": _delta_volume(pp),
        "grad_norm": _delta_grad_norm(pp),
        "christoffel": _christoffel_variation(pp),
        "laplacian": _delta_laplacian(pp, reading),
        "scalar_curvature": _delta_scalar_curvature(pp).total,
    }


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Sup-norm error relative to the sup norm of the numeric values."""
    scale = float(np.abs(numeric).max(initial=0.0))
    err = float(np.abs(np.asarray(analytic) - np.asarray(numeric)).max(initial=0.0))
    return err / scale if scale > 0 else err


def absolute_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    return float(np.abs(np.asarray(analytic) - np.asarray(numeric)).max(initial=0.0))


def term_errors(
    pp: Perturbation, steps: Sequence[float] = DEFAULT_STEPS, reading: str = "h", absolute: bool = False
) -> dict:
    """Per-term analytic vs finite-difference errors (relative unless ``absolute``).

    ``y_identity`` is the absolute gap between the two routes to Y.
    """
    num = fd_terms(pp, steps)
    ana = analytic_terms(pp, reading)
    measure = absolute_error if absolute else relative_error
    errors = {k: measure(ana[k], num[k]) for k in ana}
    errors["y_identity"] = _y_vector(pp).gap
    return errors


def term_passes(rel: dict, abs_: dict, rel_tol: float = 1e-6, abs_tol: float = 1e-9) -> dict:
    """A term passes on relative error, or on absolute error when the term itself is ~0."""
    out = {k: rel[k] <= rel_tol or abs_[k] <= abs_tol for k in rel if k != "y_identity"}
    out["y_identity"] = rel["y_identity"] <= 1e-12
    return out


@dataclass
class VariationTerms:
    """Pointwise first-variation terms along (s, h) at a batch of points."""

    delta_R: np.ndarray
    delta_volume: np.ndarray
    delta_grad_norm: np.ndarray
    delta_laplacian: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    A: np.ndarray

    def finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, k))) for k in self.__dataclass_fields__)


def variation_terms(g: MetricField, f, s: SymTensorField, h, p) -> VariationTerms:
    pp = _pp(g, f, s, h, p)
    dR = _delta_scalar_curvature(pp)
    return VariationTerms(
        delta_R=dR.total,
        delta_volume=_delta_volume(pp),
        delta_grad_norm=_delta_grad_norm(pp),
        delta_laplacian=_delta_laplacian(pp),
        X=dR.X,
        Y=_y_vector(pp).contraction,
        A=_christoffel_variation(pp),
    )


# -- integrated quantities ----------------------------------------------------------


@dataclass
class VariationInstance:
    g: MetricField
    f: ScalarField
    s: SymTensorField
    h: ScalarField
    grid: SampleGrid
    t_steps: tuple = DEFAULT_STEPS

    def __post_init__(self):
        self.grid.require_periodic()
        self.t_steps = tuple(float(x) for x in self.t_steps)
        if any(a <= b for a, b in zip(self.t_steps, self.t_steps[1:])) or min(self.t_steps) <= 0:
            raise ValueError("t_steps must be positive and strictly decreasing")
        for fld in (self.f, self.s, self.h):
            if fld.chart != self.g.chart:
                raise ValueError("all fields must live on the metric's chart")

    def digest(self) -> str:
        payload = json.dumps(
            {
                "g": repr(self.g),
                "f": repr(self.f.expression),
                "s": repr(self.s),
                "h": repr(self.h.expression),
                "grid": list(self.grid.nodes),
                "steps": list(self.t_steps),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _weighted_scalar_density(g: Jet, fj: Jet) -> np.ndarray:
    R, lap, norm, sd = scalar_invariants(g, fj)
    return (R + lap - norm) * sd


def _first_variation_density(pp: Perturbation) -> np.ndarray:
    gv = pp.g.value
    gi, gam, ric = ricci_values(pp.g)
    R = np.einsum("...jk,...jk->...", gi, ric)
    df = pp.f.d1
    hess = pp.f.d2 - np.einsum("...kij,...k->...ij", gam, df)
    lap = np.einsum("...ij,...ij->...", gi, hess)
    norm = np.einsum("...ij,...i,...j->...", gi, df, df)
    E = -ric + 0.5 * R[:, None, None] * gv + np.einsum("...i,...j->...ij", df, df) - 0.5 * norm[:, None, None] * gv
    pairing = np.einsum("...ik,...jl,...ij,...kl->...", gi, gi, E, pp.s.value)
    return (pairing + 2.0 * lap * pp.h.value) * np.sqrt(np.abs(np.linalg.det(gv)))


def action(g: MetricField, f, grid: SampleGrid) -> float:
    """Quadrature of the weighted scalar curvature against sqrt|det g|."""
    grid.require_periodic()
    total = 0.0
    for sl in grid.chunks(CHUNK):
        pts = grid.points[sl]
        pp = Perturbation(g, f, points=pts, field_order=2)
        total += float(np.dot(grid.weights[sl], _weighted_scalar_density(pp.g, pp.f)))
    return total


@dataclass
class VariationSweep:
    analytic: float
    numeric: float
    estimates: list  # central differences per step
    actions: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return abs(self.analytic - self.numeric)

    @property
    def relative_gap(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        return self.gap / scale if scale > 0 else 0.0


def variation_sweep(inst: VariationInstance) -> VariationSweep:
    """One pass over the grid computing both first variations."""
    steps = inst.t_steps
    ts = [0.0] + [sign * h for h in steps for sign in (1.0, -1.0)]
    actions = {t: 0.0 for t in ts}
    analytic = 0.0
    grid = inst.grid
    for sl in grid.chunks(CHUNK):
        pts = grid.points[sl]
        w = grid.weights[sl]
        pp = Perturbation(inst.g, inst.f, inst.s, inst.h, pts, metric_order=2, field_order=2)
        analytic += float(np.dot(w, _first_variation_density(pp)))
        base_sign = np.sign(np.linalg.det(pp.g.value))
        for t in ts:
            gt = pp.g_at(t)
            _check_nondegenerate(gt.value, base_sign, pts, t)
            actions[t] += float(np.dot(w, _weighted_scalar_density(gt, pp.f_at(t))))
    estimates = [(actions[h] - actions[-h]) / (2 * h) for h in steps]
    numeric = float(richardson(steps, estimates))
    return VariationSweep(analytic, numeric, estimates, actions)


def _check_nondegenerate(gv: np.ndarray, base_sign: np.ndarray, pts: np.ndarray, t: float) -> None:
    det = np.linalg.det(gv)
    bad = np.abs(det) < DET_THRESHOLD
    if bad.any():
        raise SingularMetricError(f"g + t s is singular for t = {t:g}", pts[np.argmax(bad)])
    flipped = np.sign(det) != base_sign
    if flipped.any():
        raise SignatureChangeError(
            f"g + t s changes signature for t = {t:g} at {tuple(float(x) for x in pts[np.argmax(flipped)])}"
        )


def analytic_first_variation(inst: VariationInstance) -> float:
    total = 0.0
    for sl in inst.grid.chunks(CHUNK):
        pp = Perturbation(inst.g, inst.f, inst.s, inst.h, inst.grid.points[sl], field_order=2)
        total += float(np.dot(inst.grid.weights[sl], _first_variation_density(pp)))
    return total


def numeric_first_variation(inst: VariationInstance) -> float:
    """Richardson-extrapolated d/dt of the action along (g + t s, f + t h)."""

    def act(t):
        total = 0.0
        for sl in inst.grid.chunks(CHUNK):
            pp = Perturbation(inst.g, inst.f, inst.s, inst.h, inst.grid.points[sl], field_order=2)
            total += float(np.dot(inst.grid.weights[sl], _weighted_scalar_density(pp.g_at(t), pp.f_at(t))))
        return total

    return float(central_derivative(act, inst.t_steps))


def integration_by_parts_gap(g: MetricField, f, h, grid: SampleGrid) -> tuple[float, float]:
    """``(int <grad h, grad f> dV + int Laplacian(f) h dV, int <grad h, grad f> dV)``."""
    grid.require_periodic()
    pairing = 0.0
    lap_term = 0.0
    for sl in grid.chunks(CHUNK):
        pp = Perturbation(g, f, None, h, grid.points[sl], field_order=2)
        fr = pp.frame
        w = grid.weights[sl] * fr.sqrt_det.value
        grad_f = raise_index(pp.f.grad().value, fr)
        pairing += float(np.dot(w, np.einsum("bi,bi->b", pp.h.grad().value, grad_f)))
        lap_term += float(np.dot(w, laplacian_jet(pp.f, fr).value * pp.h.value))
    return pairing + lap_term, pairing


def divergence_integral(g: MetricField, s: SymTensorField, grid: SampleGrid) -> float:
    """Quadrature of div X sqrt|det g| with X = div(s) - grad tr(s)."""
    grid.require_periodic()
    total = 0.0
    for sl in grid.chunks(CHUNK):
        pp = Perturbation(g, None, s, None, grid.points[sl])
        fr = pp.frame
        total += float(np.dot(grid.weights[sl], div_vector_jet(_x_vector(pp), fr).value * fr.sqrt_det.value))
    return total


# -- reports ------------------------------------------------------------------------


def variation_report(
    inst: VariationInstance,
    check_points: np.ndarray,
    name: str = "",
    seed: Optional[int] = None,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-9,
) -> dict:
    """Run the sweep and per-term checks and summarize them as a JSON-ready dict.

    The total passes when the relative gap is within ``rel_tol`` or both
    first variations are within ``abs_tol`` of zero (critical pairs).
    """
    sweep = variation_sweep(inst)
    pp = Perturbation(inst.g, inst.f, inst.s, inst.h, check_points)
    num = fd_terms(pp, inst.t_steps)
    ana = analytic_terms(pp)
    errors = {k: relative_error(ana[k], num[k]) for k in ana}
    errors["y_identity"] = _y_vector(pp).gap
    abs_errors = {k: absolute_error(ana[k], num[k]) for k in ana}
    passes = term_passes(errors, abs_errors, rel_tol, abs_tol)
    at_zero = max(abs(sweep.analytic), abs(sweep.numeric)) <= abs_tol
    total_ok = at_zero or sweep.relative_gap <= rel_tol
    terms_ok = all(passes.values())
    return {
        "model": name,
        "digest": inst.digest(),
        "seed": seed,
        "grid": list(inst.grid.nodes),
        "steps": list(inst.t_steps),
        "total_analytic": sweep.analytic,
        "total_numeric": sweep.numeric,
        "relative_gap": sweep.relative_gap,
        "term_errors": errors,
        "term_abs_errors": abs_errors,
        "term_pass": passes,
        "tolerances": {"relative": rel_tol, "absolute": abs_tol, "y_identity": 1e-12},
        "pass": bool(total_ok and terms_ok),
    }
