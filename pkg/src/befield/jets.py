"""Truncated multivariate Taylor jets, vectorized over a batch of points.

A :class:`Jet` carries the value of a (tensor-valued) field together with all
partial derivatives up to a fixed order (at most 3) at every point of a batch.
Array layout, for a field of tensor shape ``S`` on an ``n``-dimensional chart
evaluated at ``B`` points::

    value  (B, *S)
    d1     (B, n, *S)
    d2     (B, n, n, *S)
    d3     (B, n, n, n, *S)

Derivative axes sit between the batch axis and the tensor axes, so any numpy
operation acting on the trailing tensor axes (with ``...`` for the rest) lifts
to jets through :meth:`Jet.linear` and :func:`bilinear`.

Arithmetic follows the Leibniz rule and the order-3 Faa di Bruno formula; the
order of a result is the minimum order of its operands, so quantities built
from first derivatives of an order-3 jet carry order 2, and so on.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 3


class JetDomainError(ValueError):
    """Raised when an elementwise function is applied outside its domain.

    ``mask`` flags the offending batch entries (shape ``(B,)``).
    """

    def __init__(self, message: str, mask: np.ndarray):
        super().__init__(message)
        self.mask = mask


def _insert(a: np.ndarray, pos: int, count: int = 1) -> np.ndarray:
    """Insert ``count`` singleton axes at position ``pos``."""
    return a.reshape(a.shape[:pos] + (1,) * count + a.shape[pos:])


class Jet:
    """Value plus partial derivatives up to ``order`` at a batch of points."""

    __slots__ = ("value", "derivs")

    def __init__(self, value: np.ndarray, derivs: Sequence[np.ndarray] = ()):
        self.value = np.asarray(value, dtype=float)
        self.derivs = tuple(np.asarray(d, dtype=float) for d in derivs)
        if len(self.derivs) > MAX_ORDER:
            raise ValueError(f"jet order {len(self.derivs)} exceeds {MAX_ORDER}")

    # -- construction -----------------------------------------------------

    @classmethod
    def variable(cls, values: np.ndarray, index: int, n: int, order: int = MAX_ORDER) -> "Jet":
        """Coordinate function ``x^index`` evaluated at ``values`` (shape (B,))."""
        values = np.asarray(values, dtype=float)
        batch = values.shape[0]
        derivs = []
        if order >= 1:
            d1 = np.zeros((batch, n))
            d1[:, index] = 1.0
            derivs.append(d1)
        for k in range(2, order + 1):
            derivs.append(np.zeros((batch,) + (n,) * k))
        return cls(values, derivs)

    @classmethod
    def constant(cls, value, batch: int, n: int, order: int = MAX_ORDER) -> "Jet":
        value = np.asarray(value, dtype=float)
        v = np.broadcast_to(value, (batch,) + value.shape).copy()
        derivs = [np.zeros((batch,) + (n,) * k + value.shape) for k in range(1, order + 1)]
        return cls(v, derivs)

    @classmethod
    def stack(cls, jets: Sequence["Jet"], axis: int = 0) -> "Jet":
        """Stack jets of identical shape along a new tensor axis."""
        order = min(j.order for j in jets)
        ndim = jets[0].value.ndim - 1
        if axis < 0:
            axis += ndim + 1
        value = np.stack([j.value for j in jets], axis=1 + axis)
        derivs = [
            np.stack([j.derivs[k - 1] for j in jets], axis=1 + k + axis)
            for k in range(1, order + 1)
        ]
        return cls(value, derivs)

    # -- introspection ----------------------------------------------------

    @property
    def order(self) -> int:
        return len(self.derivs)

    @property
    def batch(self) -> int:
        return self.value.shape[0]

    @property
    def shape(self) -> tuple:
        return self.value.shape[1:]

    @property
    def n(self) -> int:
        if not self.derivs:
            raise ValueError("order-0 jet has no derivative axes")
        return self.derivs[0].shape[1]

    @property
    def d1(self) -> np.ndarray:
        return self.derivs[0]

    @property
    def d2(self) -> np.ndarray:
        return self.derivs[1]

    @property
    def d3(self) -> np.ndarray:
        return self.derivs[2]

    def arrays(self) -> tuple:
        return (self.value,) + self.derivs

    def truncate(self, order: int) -> "Jet":
        return Jet(self.value, self.derivs[:order])

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, batch={self.batch}, order={self.order})"

    # -- linear maps on the tensor axes -----------------------------------

    def linear(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Jet":
        """Apply a linear map acting on the trailing tensor axes."""
        return Jet(fn(self.value), [fn(d) for d in self.derivs])

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        rank = len(self.shape)
        return self.linear(lambda a: a[(slice(None),) * (a.ndim - rank) + idx])

    def _lift(self, ndim: int) -> "Jet":
        """Prepend singleton tensor axes so that the tensor rank equals ``ndim``."""
        extra = ndim - len(self.shape)
        if extra <= 0:
            return self
        return Jet(
            _insert(self.value, 1, extra),
            [_insert(d, 1 + k, extra) for k, d in enumerate(self.derivs, start=1)],
        )

    def grad(self) -> "Jet":
        """Partial derivatives as a jet of one lower order.

        The derivative index is appended as the last tensor axis.
        """
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        value = np.moveaxis(self.derivs[0], 1, -1)
        derivs = [np.moveaxis(self.derivs[k], k + 1, -1) for k in range(1, self.order)]
        return Jet(value, derivs)

    # -- arithmetic -------------------------------------------------------

    def __neg__(self) -> "Jet":
        return Jet(-self.value, [-d for d in self.derivs])

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            ndim = max(len(self.shape), len(other.shape))
            a, b = self._lift(ndim), other._lift(ndim)
            order = min(a.order, b.order)
            return Jet(a.value + b.value, [a.derivs[k] + b.derivs[k] for k in range(order)])
        other = np.asarray(other, dtype=float)
        return Jet(self.value + other, self.derivs)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            ndim = max(len(self.shape), len(other.shape))
            return bilinear(np.multiply, self._lift(ndim), other._lift(ndim))
        other = np.asarray(other, dtype=float)
        return Jet(self.value * other, [d * other for d in self.derivs])

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def reciprocal(self) -> "Jet":
        bad = self.value == 0
        if np.any(bad):
            raise JetDomainError("division by zero", _batch_mask(bad))
        u = self.value
        return self.apply(1.0 / u, -1.0 / u**2, 2.0 / u**3, -6.0 / u**4)

    def apply(self, f0, f1, f2=None, f3=None) -> "Jet":
        """Compose with an elementwise function given its derivatives at ``value``."""
        out = [np.asarray(f0, dtype=float)]
        if self.order >= 1:
            u1 = self.derivs[0]
            f1b = _insert(f1, 1)
            out.append(f1b * u1)
        if self.order >= 2:
            u2 = self.derivs[1]
            u1i, u1j = u1[:, :, None], u1[:, None, :]
            out.append(_insert(f2, 1, 2) * u1i * u1j + _insert(f1, 1, 2) * u2)
        if self.order >= 3:
            u3 = self.derivs[2]
            a = u1[:, :, None, None]
            b = u1[:, None, :, None]
            c = u1[:, None, None, :]
            cross = u2[:, :, :, None] * c + u2[:, :, None, :] * b + u2[:, None, :, :] * a
            out.append(
                _insert(f3, 1, 3) * a * b * c
                + _insert(f2, 1, 3) * cross
                + _insert(f1, 1, 3) * u3
            )
        return Jet(out[0], out[1:])

    def power(self, p: float) -> "Jet":
        """Raise to a constant real power."""
        u = self.value
        integral = float(p).is_integer()
        if integral:
            if p < 0 and np.any(u == 0):
                raise JetDomainError(f"zero raised to negative power {p}", _batch_mask(u == 0))
        else:
            bad = (u < 0) | ((u == 0) & (p < self.order))
            if np.any(bad):
                raise JetDomainError(f"non-integer power {p} of non-positive base", _batch_mask(bad))
        coeffs = [1.0, p, p * (p - 1), p * (p - 1) * (p - 2)]
        terms = []
        for k, c in enumerate(coeffs):
            if c == 0.0 or k > self.order:
                terms.append(np.zeros_like(u))
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    terms.append(c * np.power(u, p - k))
        return self.apply(*terms)

    def __pow__(self, p) -> "Jet":
        return self.power(float(p))


def _batch_mask(bad: np.ndarray) -> np.ndarray:
    bad = np.asarray(bad)
    return bad.reshape(bad.shape[0], -1).any(axis=1) if bad.ndim > 1 else bad


# -- bilinear operations ---------------------------------------------------


def bilinear(op: Callable[[np.ndarray, np.ndarray], np.ndarray], u, v) -> Jet:
    """Lift a bilinear map on the tensor axes to jets by the Leibniz rule.

    ``op`` must broadcast over any leading axes. Either operand may be a plain
    array of shape ``(B, *S)``, in which case it is treated as a field whose
    derivatives vanish (a constant of the arithmetic, not of the chart).
    """
    if not isinstance(u, Jet):
        u = np.asarray(u, dtype=float)
        return Jet(op(u, v.value), [op(_insert(u, 1, k), d) for k, d in enumerate(v.derivs, 1)])
    if not isinstance(v, Jet):
        v = np.asarray(v, dtype=float)
        return Jet(op(u.value, v), [op(d, _insert(v, 1, k)) for k, d in enumerate(u.derivs, 1)])

    order = min(u.order, v.order)
    u0, v0 = u.value, v.value
    out = [op(u0, v0)]
    if order >= 1:
        u1, v1 = u.derivs[0], v.derivs[0]
        out.append(op(u1, _insert(v0, 1)) + op(_insert(u0, 1), v1))
    if order >= 2:
        u2, v2 = u.derivs[1], v.derivs[1]
        out.append(
            op(u2, _insert(v0, 1, 2))
            + op(u1[:, :, None], v1[:, None, :])
            + op(u1[:, None, :], v1[:, :, None])
            + op(_insert(u0, 1, 2), v2)
        )
    if order >= 3:
        u3, v3 = u.derivs[2], v.derivs[2]
        w = op(u3, _insert(v0, 1, 3)) + op(_insert(u0, 1, 3), v3)
        # u_ij v_k + u_ik v_j + u_jk v_i and the mirrored terms
        w = w + op(u2[:, :, :, None], v1[:, None, None, :])
        w = w + op(u2[:, :, None, :], v1[:, None, :, None])
        w = w + op(u2[:, None, :, :], v1[:, :, None, None])
        w = w + op(u1[:, None, None, :], v2[:, :, :, None])
        w = w + op(u1[:, None, :, None], v2[:, :, None, :])
        w = w + op(u1[:, :, None, None], v2[:, None, :, :])
        out.append(w)
    return Jet(out[0], out[1:])


def einsum(subscripts: str, u, v) -> Jet:
    """Two-operand ``np.einsum`` on the tensor axes, lifted to jets.

    ``subscripts`` names only tensor axes, e.g. ``"ij,jk->ik"``.
    """
    lhs, rhs = subscripts.replace(" ", "").split("->")
    a, b = lhs.split(",")
    spec = f"...{a},...{b}->...{rhs}"
    return bilinear(lambda x, y: np.einsum(spec, x, y), u, v)


def matmul(u, v) -> Jet:
    return bilinear(np.matmul, u, v)


def inverse(m: Jet) -> Jet:
    """Inverse of a square-matrix jet via the nilpotent Neumann series."""
    m0inv = np.linalg.inv(m.value)
    k = Jet(np.zeros_like(m.value), [_left(m0inv, d, i + 1) for i, d in enumerate(m.derivs)])
    # (I + K)^{-1} = I - K + K^2 - K^3 since K has zero value.
    series = Jet(np.broadcast_to(np.eye(m.shape[-1]), m.value.shape).copy(),
                 [-d for d in k.derivs])
    power = k
    sign = -1.0
    for _ in range(2, m.order + 1):
        power = matmul(power, k)
        sign = -sign
        series = series + sign * power
    return matmul(series, m0inv)


def _left(a: np.ndarray, d: np.ndarray, nderiv: int) -> np.ndarray:
    return _insert(a, 1, nderiv) @ d


def log_abs_det(m: Jet) -> Jet:
    """``log|det m|`` for a square-matrix jet."""
    m0inv = np.linalg.inv(m.value)
    sign, logdet = np.linalg.slogdet(m.value)
    k = Jet(np.zeros_like(m.value), [_left(m0inv, d, i + 1) for i, d in enumerate(m.derivs)])
    # log det(I + K) = tr(K - K^2/2 + K^3/3)
    acc = k
    power = k
    for j in range(2, m.order + 1):
        power = matmul(power, k)
        acc = acc + ((-1.0) ** (j + 1) / j) * power
    tr = acc.linear(lambda a: np.trace(a, axis1=-2, axis2=-1))
    return tr + logdet


def sqrt_abs_det(m: Jet) -> Jet:
    return exp(0.5 * log_abs_det(m))


# -- elementwise functions -------------------------------------------------


def sin(u: Jet) -> Jet:
    s, c = np.sin(u.value), np.cos(u.value)
    return u.apply(s, c, -s, -c)


def cos(u: Jet) -> Jet:
    s, c = np.sin(u.value), np.cos(u.value)
    return u.apply(c, -s, -c, s)


def exp(u: Jet) -> Jet:
    e = np.exp(u.value)
    return u.apply(e, e, e, e)


def log(u: Jet) -> Jet:
    x = u.value
    bad = x <= 0
    if np.any(bad):
        raise JetDomainError("logarithm of non-positive value", _batch_mask(bad))
    return u.apply(np.log(x), 1.0 / x, -1.0 / x**2, 2.0 / x**3)


def sqrt(u: Jet) -> Jet:
    x = u.value
    bad = x <= 0
    if np.any(bad):
        raise JetDomainError("square root of non-positive value", _batch_mask(bad))
    r = np.sqrt(x)
    return u.apply(r, 0.5 / r, -0.25 / (r * x), 0.375 / (r * x * x))


def sinh(u: Jet) -> Jet:
    s, c = np.sinh(u.value), np.cosh(u.value)
    return u.apply(s, c, s, c)


def cosh(u: Jet) -> Jet:
    s, c = np.sinh(u.value), np.cosh(u.value)
    return u.apply(c, s, c, s)


def tanh(u: Jet) -> Jet:
    th = np.tanh(u.value)
    sech2 = 1.0 - th**2
    return u.apply(th, sech2, -2.0 * th * sech2, sech2 * (6.0 * th**2 - 2.0))


UNARY = {
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "ln": log,
    "sqrt": sqrt,
    "sinh": sinh,
    "cosh": cosh,
    "tanh": tanh,
}
