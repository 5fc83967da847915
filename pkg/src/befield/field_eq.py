"""Residuals of the weighted field equations and pointwise checks of their theorems.

Full system (any dimension n >= 2)::

    Ric - R g / 2 = T^f,   T^f = df (x) df - |grad f|^2 g / 2
    Laplacian(f) = 0

Reduced system (n >= 3)::

    Ric = df (x) df,   Laplacian(f) = 0
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import jets
from .bakry_emery import BEParam, MetricLike, as_frame, be_ricci_jet, best_lambda, classify, dfdf_jet, field_jet
from .geometry import (
    Frame,
    div_sym2_jet,
    gradient_jet,
    grad_norm_sq_jet,
    hessian_jet,
    laplacian_jet,
    max_abs,
)

ZERO_TOL = 1e-9


class DimensionError(ValueError):
    pass


def _require_dim3(frame: Frame) -> None:
    if frame.n < 3:
        raise DimensionError(f"reduced field equations need dimension >= 3, got {frame.n}")


def stress_tensor_jet(frame: Frame, fj) -> jets.Jet:
    return dfdf_jet(fj) - 0.5 * jets.einsum(",ij->ij", grad_norm_sq_jet(fj, frame), frame.g)


def stress_tensor(g: MetricLike, f, p=None) -> np.ndarray:
    """T^f = df (x) df - |grad f|^2 g / 2."""
    frame = as_frame(g, p)
    return stress_tensor_jet(frame, field_jet(frame, f)).value


def full_residual(g: MetricLike, f, p=None) -> tuple[np.ndarray, np.ndarray]:
    """``(Ric - R g / 2 - T^f, Laplacian f)``."""
    frame = as_frame(g, p)
    fj = field_jet(frame, f)
    ric = frame.ricci.value
    R = frame.scalar.value
    E = ric - 0.5 * R[:, None, None] * frame.g.value - stress_tensor_jet(frame, fj).value
    return E, laplacian_jet(fj, frame).value


def reduced_residual(g: MetricLike, f, p=None) -> tuple[np.ndarray, np.ndarray]:
    """``(Ric - df (x) df, Laplacian f)``; needs dimension >= 3."""
    frame = as_frame(g, p)
    _require_dim3(frame)
    fj = field_jet(frame, f)
    return frame.ricci.value - dfdf_jet(fj).value, laplacian_jet(fj, frame).value


def trace_gap(g: MetricLike, f, p=None) -> np.ndarray:
    """``R - |grad f|^2``, which vanishes on solutions."""
    frame = as_frame(g, p)
    _require_dim3(frame)
    fj = field_jet(frame, f)
    return frame.scalar.value - grad_norm_sq_jet(fj, frame).value


@dataclass
class EquivalenceResult:
    ok: bool
    full_norm: np.ndarray
    reduced_norm: np.ndarray
    full_from_reduced_err: np.ndarray
    reduced_from_full_err: np.ndarray


def equivalence_check(g: MetricLike, f, p=None, tol: float = 1e-12, zero_tol: float = ZERO_TOL) -> EquivalenceResult:
    """Check that the full and reduced residuals determine each other.

    With gap = R - |grad f|^2 = tr(E_red) one has E_full = E_red - gap g / 2,
    and tr(E_full) = (1 - n/2) gap recovers the gap from the full residual.
    Both reconstructions are compared against the directly computed tensor;
    errors are scaled by max(1, largest entry involved).
    """
    frame = as_frame(g, p)
    _require_dim3(frame)
    n = frame.n
    gv = frame.g.value
    E_full, lap = full_residual(frame, f)
    E_red, _ = reduced_residual(frame, f)
    gi = frame.g_inv.value
    gap_red = np.einsum("bij,bij->b", gi, E_red)
    gap_full = np.einsum("bij,bij->b", gi, E_full) / (1.0 - n / 2.0)
    full_rebuilt = E_red - 0.5 * gap_red[:, None, None] * gv
    red_rebuilt = E_full + 0.5 * gap_full[:, None, None] * gv
    scale = np.maximum(1.0, np.maximum(max_abs(E_full), max_abs(E_red)))
    err_fwd = max_abs(full_rebuilt - E_full) / scale
    err_bwd = max_abs(red_rebuilt - E_red) / scale
    full_zero = (max_abs(E_full) <= zero_tol) & (np.abs(lap) <= zero_tol)
    red_zero = (max_abs(E_red) <= zero_tol) & (np.abs(lap) <= zero_tol)
    ok = bool(np.all(err_fwd <= tol) and np.all(err_bwd <= tol) and np.all(full_zero == red_zero))
    return EquivalenceResult(ok, max_abs(E_full), max_abs(E_red), err_fwd, err_bwd)


@dataclass
class DivergenceCheck:
    div_T: np.ndarray  # (B, n) divergence of T^f
    div_dfdf: np.ndarray  # divergence of df (x) df
    lap_df: np.ndarray  # Laplacian(f) df
    hess_grad: np.ndarray  # Hess f(grad f, .)
    div_half_norm_g: np.ndarray  # divergence of |grad f|^2 g / 2
    identity_dfdf: np.ndarray  # div(df df) - lap df - Hess(grad f, .)
    identity_norm_g: np.ndarray  # div(|grad f|^2 g / 2) - Hess(grad f, .)


def divergence_check(g: MetricLike, f, p=None) -> DivergenceCheck:
    """Divergence of T^f and its two-term decomposition.

    Each divergence is computed from the tensor's own derivatives
    (covariant derivative of the jet), independently of the identities
    it is compared with.
    """
    frame = as_frame(g, p)
    fj = field_jet(frame, f)
    df = fj.grad()
    dfdf = dfdf_jet(fj)
    half_norm_g = 0.5 * jets.einsum(",ij->ij", grad_norm_sq_jet(fj, frame), frame.g)
    div_dfdf = div_sym2_jet(dfdf, frame).value
    div_half = div_sym2_jet(half_norm_g, frame).value
    div_T = div_sym2_jet(dfdf - half_norm_g, frame).value
    lap = laplacian_jet(fj, frame).value
    lap_df = lap[:, None] * df.value
    hess = hessian_jet(fj, frame).value
    hess_grad = np.einsum("bij,bi->bj", hess, gradient_jet(fj, frame).value)
    return DivergenceCheck(
        div_T,
        div_dfdf,
        lap_df,
        hess_grad,
        div_half,
        div_dfdf - lap_df - hess_grad,
        div_half - hess_grad,
    )


# -- critical pairs that are steady quasi-Einstein ----------------------


@dataclass
class SteadyRecord:
    field_res_zero: bool
    hess_norm: float
    hess_zero: bool
    qe0_res_zero: bool
    implied_lambda: float
    qe_any_lambda: bool
    violations: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations


def steady_predicates(ric, hess, df, g, g_inv, tol: float = ZERO_TOL) -> SteadyRecord:
    """Evaluate the steady quasi-Einstein characterization at one point.

    Inputs are the component arrays of Ric, Hess f, df and the metric, so
    arbitrary algebraic data can be substituted. Checked directions:

    * critical and Ric_f^1 = lambda g  =>  lambda = 0 and Hess f = 0
    * Ric_f^1 = 0 and Hess f = 0  =>  critical
    * (critical and Hess f = 0)  <=>  (Ric_f^1 = 0 and Hess f = 0)
    """
    ric, hess, df, g, g_inv = (np.asarray(a, dtype=float) for a in (ric, hess, df, g, g_inv))
    n = g.shape[0]
    dfdf = np.outer(df, df)
    lap = float(np.einsum("ij,ij->", g_inv, hess))
    field_zero = bool(np.abs(ric - dfdf).max() <= tol and abs(lap) <= tol)
    hess_norm = float(np.abs(hess).max())
    hess_zero = hess_norm <= tol
    be1 = ric + hess - dfdf
    qe0 = bool(np.abs(be1).max() <= tol)
    lam = float(np.einsum("ij,ij->", g_inv, be1)) / n
    qe_any = bool(np.abs(be1 - lam * g).max() <= tol)

    violations = []
    if field_zero and qe_any and not (abs(lam) <= tol and hess_zero):
        violations.append("critical quasi-Einstein pair with lambda != 0 or Hess f != 0")
    if qe0 and hess_zero and not field_zero:
        violations.append("steady quasi-Einstein with parallel gradient but not critical")
    if (field_zero and hess_zero) != (qe0 and hess_zero):
        violations.append("biconditional fails")
    return SteadyRecord(field_zero, hess_norm, hess_zero, qe0, lam, qe_any, violations)


def steady_check(g: MetricLike, f, p=None, tol: float = ZERO_TOL) -> list[SteadyRecord]:
    frame = as_frame(g, p)
    fj = field_jet(frame, f)
    ric = frame.ricci.value
    hess = hessian_jet(fj, frame).value
    df = fj.grad().value
    gv, gi = frame.g.value, frame.g_inv.value
    return [steady_predicates(ric[b], hess[b], df[b], gv[b], gi[b], tol) for b in range(gv.shape[0])]


theorem3_check = steady_check


# -- reports --------------------------------------------------------------------


def _record_key(rec: dict) -> tuple:
    # the json text breaks ties between numerically equal coordinates such as 0.0 and -0.0
    return rec["model"], rec["coords"], json.dumps(rec, sort_keys=True)


def _extra_values(v) -> list:
    # conflicting extras merge into {"values": [...]}, which keeps merging associative
    return v["values"] if isinstance(v, dict) and set(v) == {"values"} else [v]


@dataclass
class ResidualReport:
    """Per-point residual norms with aggregate maxima.

    Merging is associative and commutative: records are kept sorted by
    (model, coordinates) and aggregates are maxima.
    """

    model: str
    tolerances: dict
    records: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add(self, coords, norms: dict, model: Optional[str] = None) -> None:
        self.records.append(
            {
                "model": model or self.model,
                "coords": [float(c) for c in coords],
                "norms": {k: float(v) for k, v in norms.items()},
            }
        )

    @property
    def aggregates(self) -> dict:
        agg: dict = {}
        for rec in self.records:
            for k, v in rec["norms"].items():
                agg[k] = max(agg.get(k, 0.0), v)
        return agg

    @property
    def passed(self) -> bool:
        agg = self.aggregates
        return all(agg.get(k, 0.0) <= tol for k, tol in self.tolerances.items()) and all(
            np.isfinite(v) for v in agg.values()
        )

    def merge(self, other: "ResidualReport") -> "ResidualReport":
        models = sorted(set(self.model.split("+")) | set(other.model.split("+")))
        tolerances = dict(self.tolerances)
        for k, v in other.tolerances.items():
            tolerances[k] = min(v, tolerances.get(k, v))
        records = sorted(self.records + other.records, key=_record_key)
        extra = {}
        for k in sorted(set(self.extra) | set(other.extra)):
            values = [v for r in (self, other) if k in r.extra for v in _extra_values(r.extra[k])]
            distinct = sorted({json.dumps(v, sort_keys=True): v for v in values}.items())
            extra[k] = distinct[0][1] if len(distinct) == 1 else {"values": [v for _, v in distinct]}
        return ResidualReport("+".join(models), tolerances, records, extra)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "points": [
                {"model": r["model"], "coords": r["coords"], "norms": r["norms"]} for r in self.records
            ],
            "aggregates": self.aggregates,
            "pass": self.passed,
            "tolerances": self.tolerances,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ResidualReport":
        records = [
            {"model": r.get("model", data["model"]), "coords": r["coords"], "norms": r["norms"]}
            for r in data["points"]
        ]
        return cls(data["model"], dict(data["tolerances"]), records, dict(data.get("extra", {})))


def residual_report(
    name: str,
    g: MetricLike,
    f,
    points,
    tol: float = ZERO_TOL,
    m: Optional[BEParam] = None,
) -> ResidualReport:
    """Evaluate every field-equation residual at ``points``.

    Names: ``full_eq``, ``laplacian``, ``div_Tf`` and, for dimension >= 3,
    ``reduced_eq`` and ``trace_gap``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    frame = as_frame(g, pts)
    E, lap = full_residual(frame, f)
    norms = {
        "full_eq": max_abs(E),
        "laplacian": np.abs(lap),
        "div_Tf": max_abs(divergence_check(frame, f).div_T),
    }
    if frame.n >= 3:
        E_red, _ = reduced_residual(frame, f)
        norms["reduced_eq"] = max_abs(E_red)
        norms["trace_gap"] = np.abs(trace_gap(frame, f))
    report = ResidualReport(name, {k: tol for k in norms})
    for b in range(pts.shape[0]):
        report.add(pts[b], {k: v[b] for k, v in norms.items()})
    if m is not None:
        fj = field_jet(frame, f)
        be = be_ricci_jet(frame, fj, m).value
        lam = best_lambda(be, frame.g.value)
        report.extra["quasi_einstein"] = {
            "m": str(m),
            "best_lambda": lam,
            "label": classify(lam),
            "max_residual": float(max_abs(be - lam * frame.g.value).max()),
        }
    return report


def merge_reports(reports: Iterable[ResidualReport]) -> ResidualReport:
    reports = list(reports)
    out = reports[0]
    for r in reports[1:]:
        out = out.merge(r)
    return out
