import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from befield import jets
from befield.jets import Jet, JetDomainError


def _vars(points, order=3):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    return [Jet.variable(pts[:, i], i, n, order) for i in range(n)]


class TestArithmetic:
    def test_product_of_coordinates(self):
        x, y = _vars([[2.0, 3.0]])
        p = x * y
        assert_allclose(p.value, [6.0])
        assert_allclose(p.d1[0], [3.0, 2.0])
        assert_allclose(p.d2[0], [[0.0, 1.0], [1.0, 0.0]])
        assert_allclose(p.d3[0], np.zeros((2, 2, 2)))

    def test_cubic_polynomial_is_exact(self, rng):
        # integer points keep every floating-point operation exact
        pts = rng.integers(-3, 4, size=(7, 2)).astype(float)
        x, y = _vars(pts)
        p = 3 * x * x * y - 2 * y * y * y + x - 5
        xv, yv = pts[:, 0], pts[:, 1]
        assert np.array_equal(p.value, 3 * xv * xv * yv - 2 * yv * yv * yv + xv - 5)
        assert np.array_equal(p.d1[:, 0], 6 * xv * yv + 1)
        assert np.array_equal(p.d1[:, 1], 3 * xv * xv - 6 * yv * yv)
        assert np.array_equal(p.d3[:, 0, 0, 1], np.full(7, 6.0))
        assert np.array_equal(p.d3[:, 1, 1, 1], np.full(7, -12.0))
        assert np.array_equal(p.d3[:, 0, 0, 0], np.zeros(7))

    def test_division_matches_reciprocal(self, rng):
        x, y = _vars(rng.uniform(1, 2, size=(5, 2)))
        a = (x + y) / (x * y)
        b = (x + y) * (x * y).reciprocal()
        for u, v in zip(a.arrays(), b.arrays()):
            assert_allclose(u, v, rtol=1e-14)

    def test_order_is_minimum_of_operands(self):
        x3 = _vars([[1.0, 2.0]], order=3)[0]
        x1 = _vars([[1.0, 2.0]], order=1)[0]
        assert (x3 * x1).order == 1
        assert (x3 + x1).order == 1

    def test_symmetry_of_mixed_partials(self, rng):
        x, y, z = _vars(rng.uniform(-1, 1, size=(4, 3)))
        e = jets.sin(x * y) * jets.exp(z - x) + jets.tanh(y * z * x)
        assert_allclose(e.d2, np.swapaxes(e.d2, 1, 2), atol=1e-15)
        for perm in [(0, 2, 1, 3), (0, 3, 2, 1), (0, 1, 3, 2)]:
            assert_allclose(e.d3, np.transpose(e.d3, perm), atol=1e-14)


class TestElementary:
    def test_log_derivatives(self):
        (t,) = [Jet.variable(np.array([2.0]), 0, 1)]
        e = jets.log(t)
        assert_allclose(e.value, [math.log(2)])
        assert_allclose(e.d1[0, 0], 0.5)
        assert_allclose(e.d2[0, 0, 0], -0.25)
        assert_allclose(e.d3[0, 0, 0, 0], 0.25)

    @pytest.mark.parametrize(
        "fn, ref",
        [
            (jets.sin, [np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)]),
            (jets.cos, [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin]),
            (jets.exp, [np.exp] * 4),
            (jets.sinh, [np.sinh, np.cosh, np.sinh, np.cosh]),
            (jets.cosh, [np.cosh, np.sinh, np.cosh, np.sinh]),
            (jets.sqrt, [np.sqrt, lambda x: 0.5 * x**-0.5, lambda x: -0.25 * x**-1.5, lambda x: 0.375 * x**-2.5]),
        ],
    )
    def test_univariate_derivatives(self, fn, ref):
        x = np.array([0.3, 1.1, 2.5])
        j = fn(Jet.variable(x, 0, 1))
        assert_allclose(j.value, ref[0](x), rtol=1e-14)
        assert_allclose(j.d1[:, 0], ref[1](x), rtol=1e-14)
        assert_allclose(j.d2[:, 0, 0], ref[2](x), rtol=1e-14)
        assert_allclose(j.d3[:, 0, 0, 0], ref[3](x), rtol=1e-13)

    def test_chain_rule_third_order(self):
        # d^3/dx^3 sin(x^2) = -12 x cos(x^2)... computed by hand: -8x^3 cos(x^2) - 12x sin(x^2)
        x = np.array([0.4, 1.3])
        j = jets.sin(Jet.variable(x, 0, 1) ** 2)
        assert_allclose(j.d3[:, 0, 0, 0], -8 * x**3 * np.cos(x**2) - 12 * x * np.sin(x**2), rtol=1e-13)

    def test_fractional_power(self):
        t = Jet.variable(np.array([1.0, 8.0]), 0, 1)
        j = t.power(2.0 / 3.0)
        tv = np.array([1.0, 8.0])
        assert_allclose(j.value, tv ** (2 / 3))
        assert_allclose(j.d1[:, 0], (2 / 3) * tv ** (-1 / 3))
        assert_allclose(j.d2[:, 0, 0], (2 / 3) * (-1 / 3) * tv ** (-4 / 3))


class TestDomain:
    def test_log_of_negative(self):
        x = Jet.variable(np.array([1.0, -0.5, 2.0]), 0, 1)
        with pytest.raises(JetDomainError) as info:
            jets.log(x)
        assert info.value.mask.tolist() == [False, True, False]

    def test_sqrt_at_zero_needs_finite_derivatives(self):
        with pytest.raises(JetDomainError):
            jets.sqrt(Jet.variable(np.array([0.0]), 0, 1))

    def test_division_by_zero(self):
        x = Jet.variable(np.array([0.0, 1.0]), 0, 1)
        with pytest.raises(JetDomainError):
            Jet.constant(1.0, 2, 1) / x


class TestMatrices:
    def _matrix_jet(self, rng, batch=4, n=3):
        pts = rng.uniform(-1, 1, size=(batch, 2))
        x, y = _vars(pts)
        rows = []
        for i in range(n):
            row = []
            for j in range(n):
                if i == j:
                    row.append(2.0 + jets.sin(x * (i + 1)) * 0.3 + y * 0.1)
                else:
                    row.append(0.2 * jets.cos(x + y * (i + j)))
            rows.append(Jet.stack(row, axis=0))
        return Jet.stack(rows, axis=0), pts

    def test_inverse_times_matrix_is_identity(self, rng):
        m, _ = self._matrix_jet(rng)
        prod = jets.matmul(m, jets.inverse(m))
        assert_allclose(prod.value, np.broadcast_to(np.eye(3), prod.value.shape), atol=1e-14)
        for d in prod.derivs:
            assert_allclose(d, 0.0, atol=1e-13)

    def test_log_det_against_numpy(self, rng):
        m, pts = self._matrix_jet(rng)
        ld = jets.log_abs_det(m)
        assert_allclose(ld.value, np.log(np.abs(np.linalg.det(m.value))), rtol=1e-13)
        # d/dx log|det M| = tr(M^-1 dM/dx)
        expect = np.einsum("bij,bji->b", np.linalg.inv(m.value), m.d1[:, 0])
        assert_allclose(ld.d1[:, 0], expect, rtol=1e-12)

    def test_sqrt_abs_det_second_derivative(self, rng):
        m, pts = self._matrix_jet(rng, batch=1)
        sd = jets.sqrt_abs_det(m)
        h = 1e-3

        def value_at(dx):
            x, y = _vars(pts + np.array([[dx, 0.0]]), order=0)
            rows = []
            for i in range(3):
                row = []
                for j in range(3):
                    if i == j:
                        row.append(2.0 + np.sin(x.value * (i + 1)) * 0.3 + y.value * 0.1)
                    else:
                        row.append(0.2 * np.cos(x.value + y.value * (i + j)))
                rows.append(row)
            return np.sqrt(abs(np.linalg.det(np.array(rows)[..., 0])))

        fd = (value_at(h) - 2 * value_at(0.0) + value_at(-h)) / h**2
        assert_allclose(sd.d2[0, 0, 0], fd, rtol=1e-5)
