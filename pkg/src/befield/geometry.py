"""Pointwise tensor calculus: connection, curvature, Hessian, Laplacian, divergences.

Conventions
-----------
* ``Gamma[k, i, j]`` is the connection coefficient Gamma^k_ij.
* ``Riemann[l, i, j, k]`` is R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik
  + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik, i.e. the components of
  R(d_i, d_j) d_k.  Ricci is Ric_jk = R^i_ijk, so the unit 2-sphere has R = +2.
* Every public tensor is fully covariant unless its name says otherwise.

All quantities are evaluated on a batch of points at once; the leading axis
of every returned array is the batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from . import expr as ex
from . import jets
from .chart import DET_THRESHOLD, Chart, MetricField, ScalarField, SingularMetricError
from .jets import MAX_ORDER, Jet

ScalarLike = Union[ScalarField, "ex.Expr", Jet]


class Frame:
    """Geometric data of one metric at a batch of points, computed lazily."""

    def __init__(self, g: Jet, points=None):
        if g.order < 2:
            raise ValueError("curvature needs the metric to second order")
        self.g = g
        self.points = None if points is None else np.atleast_2d(np.asarray(points, dtype=float))
        det = np.linalg.det(g.value)
        bad = np.abs(det) < DET_THRESHOLD
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            where = self.points[k] if self.points is not None else None
            raise SingularMetricError(f"|det g| = {abs(det[k]):.3e} below {DET_THRESHOLD:g}", where)

    @classmethod
    def at(cls, g: MetricField, points, order: int = MAX_ORDER) -> "Frame":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(g.jet(pts, order), pts)

    @property
    def n(self) -> int:
        return self.g.shape[-1]

    @property
    def order(self) -> int:
        return self.g.order

    @cached_property
    def g_inv(self) -> Jet:
        return jets.inverse(self.g)

    @cached_property
    def gamma(self) -> Jet:
        dg = self.g.grad()  # dg[a, b, c] = d_c g_ab
        low = 0.5 * (
            dg.linear(lambda a: np.einsum("...jli->...lij", a))
            + dg.linear(lambda a: np.einsum("...ilj->...lij", a))
            - dg.linear(lambda a: np.einsum("...ijl->...lij", a))
        )
        return jets.einsum("kl,lij->kij", self.g_inv, low)

    @cached_property
    def riemann(self) -> Jet:
        return riemann_from_gamma(self.gamma)

    @cached_property
    def ricci(self) -> Jet:
        return ricci_from_riemann(self.riemann)

    @cached_property
    def scalar(self) -> Jet:
        return jets.einsum("jk,jk->", self.g_inv, self.ricci)

    @cached_property
    def sqrt_det(self) -> Jet:
        return jets.sqrt_abs_det(self.g)

    def field(self, f: ScalarLike, order: Optional[int] = None) -> Jet:
        """Jet of a scalar field at the frame's points."""
        if isinstance(f, Jet):
            return f
        if self.points is None:
            raise ValueError("frame was built without points; pass a jet")
        if isinstance(f, ScalarField):
            f = f.expression
        return ex.eval_jet(f, self.points, self.order if order is None else order)


def riemann_from_gamma(gamma: Jet) -> Jet:
    dgam = gamma.grad()  # dgam[l, j, k, i] = d_i Gamma^l_jk
    gamma = gamma.truncate(dgam.order)
    return (
        dgam.linear(lambda a: np.einsum("...ljki->...lijk", a))
        - dgam.linear(lambda a: np.einsum("...likj->...lijk", a))
        + jets.einsum("lim,mjk->lijk", gamma, gamma)
        - jets.einsum("ljm,mik->lijk", gamma, gamma)
    )


def ricci_from_riemann(riem: Jet) -> Jet:
    return riem.linear(lambda a: np.einsum("...iijk->...jk", a))


# -- curvature of the Levi-Civita connection --------------------------------


def christoffel(frame: Frame) -> np.ndarray:
    return frame.gamma.value


def riemann(frame: Frame) -> np.ndarray:
    return frame.riemann.value


def ricci(frame: Frame) -> np.ndarray:
    return frame.ricci.value


def scalar_curv(frame: Frame) -> np.ndarray:
    return frame.scalar.value


# -- general torsion-free affine connections --------------------------------


@dataclass
class AffineConn:
    """Torsion-free connection: Levi-Civita of ``base`` (if any) plus ``offset``.

    ``offset`` maps ``(k, i, j)`` with ``i <= j`` to expressions; missing
    entries are zero and lower-index symmetry holds by storage.
    """

    chart: Chart
    offset: dict = field(default_factory=dict)
    base: Optional[MetricField] = None

    def __post_init__(self):
        normalized = {}
        for (k, i, j), e in self.offset.items():
            key = (k, min(i, j), max(i, j))
            normalized[key] = self.chart.parse(e)
        self.offset = normalized

    def coefficient(self, k: int, i: int, j: int) -> "ex.Expr":
        return self.offset.get((k, min(i, j), max(i, j)), ex.Const(0.0))

    def gamma(self, points, order: int = MAX_ORDER) -> Jet:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.chart.dim
        batch = pts.shape[0]
        if self.base is not None:
            total = Frame.at(self.base, pts, order + 1 if order < MAX_ORDER else order).gamma
            total = total.truncate(min(order, total.order))
        else:
            total = Jet.constant(np.zeros((n, n, n)), batch, n, order)
        arrays = [np.zeros_like(a) for a in total.arrays()]
        for (k, i, j), e in self.offset.items():
            parts = ex.eval_jet(e, pts, total.order).arrays()
            for a, part in zip(arrays, parts):
                a[..., k, i, j] += part
                if i != j:
                    a[..., k, j, i] += part
        return total + Jet(arrays[0], arrays[1:])


def affine_ricci(conn: AffineConn, p) -> np.ndarray:
    """Ricci contraction R^i_ijk of an arbitrary torsion-free connection."""
    gamma = conn.gamma(p, order=1)
    return ricci_from_riemann(riemann_from_gamma(gamma)).value


# -- scalar fields ------------------------------------------------------------


def hessian_jet(f: Jet, frame: Frame) -> Jet:
    df = f.grad()
    return df.grad() - jets.einsum("kij,k->ij", frame.gamma, df)


def gradient_jet(f: Jet, frame: Frame) -> Jet:
    return jets.einsum("ij,j->i", frame.g_inv, f.grad())


def grad_norm_sq_jet(f: Jet, frame: Frame) -> Jet:
    df = f.grad()
    return jets.einsum("i,i->", gradient_jet(f, frame), df)


def laplacian_jet(f: Jet, frame: Frame) -> Jet:
    return jets.einsum("ij,ij->", frame.g_inv, hessian_jet(f, frame))


def hessian(f: ScalarLike, frame: Frame) -> np.ndarray:
    return hessian_jet(frame.field(f), frame).value


def gradient(f: ScalarLike, frame: Frame) -> np.ndarray:
    """Contravariant gradient g^{ij} d_j f."""
    return gradient_jet(frame.field(f), frame).value


def grad_norm_sq(f: ScalarLike, frame: Frame) -> np.ndarray:
    """g(grad f, grad f); negative for timelike gradients."""
    return grad_norm_sq_jet(frame.field(f), frame).value


def laplacian(f: ScalarLike, frame: Frame) -> np.ndarray:
    """Metric trace of the Hessian (the d'Alembertian in Lorentzian signature)."""
    return laplacian_jet(frame.field(f), frame).value


# -- covariant derivatives and divergences ------------------------------------


def cov_deriv_covector(w: Jet, frame: Frame) -> Jet:
    """``out[i, j] = (nabla_i w)_j``."""
    dw = w.grad()  # dw[j, i] = d_i w_j
    return dw.linear(lambda a: np.swapaxes(a, -1, -2)) - jets.einsum("mij,m->ij", frame.gamma, w)


def cov_deriv_sym2(t: Jet, frame: Frame) -> Jet:
    """``out[i, j, k] = (nabla_i T)_jk`` for a covariant 2-tensor."""
    dt = t.grad()  # dt[j, k, i] = d_i T_jk
    return (
        dt.linear(lambda a: np.einsum("...jki->...ijk", a))
        - jets.einsum("mij,mk->ijk", frame.gamma, t)
        - jets.einsum("mik,jm->ijk", frame.gamma, t)
    )


def div_sym2_jet(t: Jet, frame: Frame) -> Jet:
    return jets.einsum("ij,ijk->k", frame.g_inv, cov_deriv_sym2(t, frame))


def div_sym2(t: Jet, frame: Frame) -> np.ndarray:
    """Covector ``div(T)_k = g^{ij} (nabla_i T)_jk``.

    ``t`` must be a jet of order at least 1 at the frame's points.
    """
    return div_sym2_jet(t, frame).value


def div_vector_jet(v: Jet, frame: Frame) -> Jet:
    """Divergence of a contravariant vector field, ``d_i V^i + Gamma^i_ik V^k``."""
    dv = v.grad()  # dv[i, j] = d_j V^i
    trace = dv.linear(lambda a: np.einsum("...ii->...", a))
    contracted = frame.gamma.linear(lambda a: np.einsum("...iik->...k", a))
    return trace + jets.einsum("k,k->", contracted, v)


def raise_index(w, frame: Frame):
    if isinstance(w, Jet):
        return jets.einsum("ij,j->i", frame.g_inv, w)
    return np.einsum("...ij,...j->...i", frame.g_inv.value, w)


# -- metric pairings ----------------------------------------------------------


def inner(a, b, frame: Frame):
    """``<A, B> = g^{ik} g^{jl} A_ij B_kl`` (arrays or jets)."""
    if isinstance(a, Jet) or isinstance(b, Jet):
        raised = jets.einsum("ik,kl->il", frame.g_inv, jets.einsum("ij,jl->il", a, frame.g_inv))
        # raised^{il} = g^{ik} A_kj g^{jl}
        return jets.einsum("ij,ij->", raised, b)
    gi = frame.g_inv.value
    return np.einsum("...ik,...jl,...ij,...kl->...", gi, gi, a, b)


def trace2(a, frame: Frame):
    if isinstance(a, Jet):
        return jets.einsum("ij,ij->", frame.g_inv, a)
    return np.einsum("...ij,...ij->...", frame.g_inv.value, a)


def max_abs(a: np.ndarray) -> np.ndarray:
    """Per-point max-abs entry norm of a batched tensor."""
    a = np.asarray(a)
    if a.ndim == 1:
        return np.abs(a)
    return np.abs(a.reshape(a.shape[0], -1)).max(axis=1)


# -- value-only fast path -----------------------------------------------------


def ricci_values(g: Jet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values of ``(g^-1, Gamma, Ric)`` from a metric jet of order at least 2."""
    gv, dg, ddg = g.value, g.d1, g.d2  # dg[m, i, j] = d_m g_ij
    B, n = gv.shape[0], gv.shape[-1]
    gi = np.linalg.inv(gv)
    # low[l, i, j] = (d_i g_jl + d_j g_il - d_l g_ij) / 2 and its derivative along m
    low = 0.5 * (np.swapaxes(np.moveaxis(dg, -1, 1), -1, -2) + np.moveaxis(dg, -1, 1) - dg)
    dlow = 0.5 * (np.swapaxes(np.moveaxis(ddg, -1, 2), -1, -2) + np.moveaxis(ddg, -1, 2) - ddg)
    gam = (gi @ low.reshape(B, n, n * n)).reshape(B, n, n, n)
    dgi = -(gi[:, None] @ dg @ gi[:, None])
    dgam = dgi @ low.reshape(B, 1, n, n * n) + gi[:, None] @ dlow.reshape(B, n, n, n * n)
    dgam = dgam.reshape(B, n, n, n, n)
    contracted = np.einsum("...iim->...m", gam)
    ric = (
        np.einsum("...iijk->...jk", dgam)
        - np.einsum("...jiik->...jk", dgam)
        + (contracted[:, None, :] @ gam.reshape(B, n, n * n)).reshape(B, n, n)
        - np.einsum("...ijm,...mik->...jk", gam, gam)
    )
    return gi, gam, ric


def scalar_invariants(g: Jet, f: Jet) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Values of ``(R, Laplacian f, |grad f|^2, sqrt|det g|)`` from raw jet arrays.

    Same conventions as :class:`Frame`, without building jets of the
    intermediate tensors. ``g`` and ``f`` need order 2.
    """
    gi, gam, ric = ricci_values(g)
    R = np.einsum("...jk,...jk->...", gi, ric)
    df = f.d1
    hess = f.d2 - np.einsum("...kij,...k->...ij", gam, df)
    lap = np.einsum("...ij,...ij->...", gi, hess)
    norm = np.einsum("...ij,...i,...j->...", gi, df, df)
    return R, lap, norm, np.sqrt(np.abs(np.linalg.det(g.value)))
