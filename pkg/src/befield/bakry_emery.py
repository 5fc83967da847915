"""Bakry-Emery Ricci tensors, weighted scalar curvature and quasi-Einstein checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import expr as ex
from . import jets
from .chart import MetricField, ScalarField
from .geometry import AffineConn, Frame, grad_norm_sq_jet, hessian_jet, laplacian_jet, max_abs
from .jets import MAX_ORDER, Jet

MetricLike = Union[MetricField, Frame]


@dataclass(frozen=True)
class BEParam:
    """The parameter m of Ric_f^m: a nonzero real or infinity.

    Infinity is kept as a sentinel so the df (x) df term is dropped
    structurally rather than multiplied by a tiny number.
    """

    m: float

    def __post_init__(self):
        m = float(self.m)
        if m == 0 or math.isnan(m):
            raise ValueError("Bakry-Emery parameter m must be nonzero")
        object.__setattr__(self, "m", math.inf if math.isinf(m) else m)

    @classmethod
    def infinite(cls) -> "BEParam":
        return cls(math.inf)

    @classmethod
    def parse(cls, text: Union[str, float]) -> "BEParam":
        if isinstance(text, str) and text.strip().lower() in ("inf", "infinity", "oo"):
            return cls.infinite()
        return cls(float(text))

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.m)

    def __str__(self) -> str:
        return "inf" if self.is_infinite else repr(self.m)


def as_frame(g: MetricLike, p=None, order: int = 2) -> Frame:
    if isinstance(g, Frame):
        return g
    return Frame.at(g, p, order)


def field_jet(frame: Frame, f) -> Jet:
    return frame.field(f, order=MAX_ORDER)


def dfdf_jet(fj: Jet) -> Jet:
    df = fj.grad()
    return jets.einsum("i,j->ij", df, df)


def be_ricci_jet(frame: Frame, fj: Jet, m: BEParam) -> Jet:
    out = frame.ricci + hessian_jet(fj, frame)
    if not m.is_infinite:
        out = out - (1.0 / m.m) * dfdf_jet(fj)
    return out


def be_ricci(g: MetricLike, f, m: Union[BEParam, float, str], p=None) -> np.ndarray:
    """Ric + Hess f - (1/m) df (x) df; the last term is absent for m = inf."""
    if not isinstance(m, BEParam):
        m = BEParam.parse(m)
    frame = as_frame(g, p)
    return be_ricci_jet(frame, field_jet(frame, f), m).value


def weighted_scalar(g: MetricLike, f, p=None) -> np.ndarray:
    """R + Laplacian(f) - |grad f|^2, the trace of Ric_f^1."""
    frame = as_frame(g, p)
    fj = field_jet(frame, f)
    return (frame.scalar + laplacian_jet(fj, frame) - grad_norm_sq_jet(fj, frame)).value


def classify(lam: float) -> str:
    if lam < 0:
        return "expanding"
    if lam > 0:
        return "shrinking"
    return "steady"


@dataclass
class QEInstance:
    g: MetricField
    f: ScalarField
    m: BEParam
    lam: float

    def __post_init__(self):
        if self.f.chart != self.g.chart:
            raise ValueError("metric and potential must share a chart")
        if not isinstance(self.m, BEParam):
            self.m = BEParam.parse(self.m)


@dataclass
class QEResidual:
    tensor: np.ndarray  # (B, n, n)
    norm: np.ndarray  # (B,) max-abs entry
    label: str


def quasi_einstein_residual(inst: QEInstance, p) -> QEResidual:
    """Ric_f^m - lambda g at the points ``p``, with its max-abs norm."""
    frame = as_frame(inst.g, p)
    res = be_ricci_jet(frame, field_jet(frame, inst.f), inst.m).value - inst.lam * frame.g.value
    return QEResidual(res, max_abs(res), classify(inst.lam))


def best_lambda(be_values: np.ndarray, g_values: np.ndarray) -> float:
    """Least-squares lambda for Ric_f^m ~ lambda g over all components and points."""
    den = float(np.sum(g_values * g_values))
    return float(np.sum(be_values * g_values)) / den


# -- projective connections ---------------------------------------------------


def projective_conn(g: MetricField, alpha: Sequence) -> AffineConn:
    """Connection nabla_X Y - alpha(X) Y - alpha(Y) X built on Levi-Civita of g.

    ``alpha`` lists the covector components as expressions (or strings).
    """
    chart = g.chart
    n = chart.dim
    if len(alpha) != n:
        raise ValueError(f"covector needs {n} components")
    comps = [chart.parse(a) for a in alpha]
    offset = {}
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                terms = []
                if j == k:
                    terms.append(comps[i])
                if i == k:
                    terms.append(comps[j])
                terms = [t for t in terms if t != ex.Const(0.0)]
                if not terms:
                    continue
                if len(terms) == 2 and terms[0] == terms[1]:
                    offset[(k, i, j)] = ex.Binary("mul", ex.Const(-2.0), terms[0])
                elif len(terms) == 2:
                    offset[(k, i, j)] = ex.Unary("neg", ex.Binary("add", terms[0], terms[1]))
                else:
                    offset[(k, i, j)] = ex.Unary("neg", terms[0])
    return AffineConn(chart, offset, base=g)


def potential_covector(f: ScalarField, scale: float = 1.0) -> list:
    """Components of ``scale * df`` as expressions."""
    n = f.chart.dim
    out = []
    for i in range(n):
        d = ex.diff(f.expression, i)
        out.append(d if scale == 1.0 else ex.Binary("mul", ex.Const(float(scale)), d))
    return out
