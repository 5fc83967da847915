import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from befield.chart import Chart, MetricField, ScalarField, sample_points
from befield.cosmology import EdSSolution
from befield.field_eq import (
    DimensionError,
    ResidualReport,
    divergence_check,
    equivalence_check,
    full_residual,
    merge_reports,
    reduced_residual,
    residual_report,
    stress_tensor,
    steady_check,
    steady_predicates,
    trace_gap,
)
from befield.geometry import Frame
from befield.models import minkowski_model, random_analytic_model, sphere_model


def flat(n, lorentzian=False, coords=None):
    coords = coords or ["x", "y", "z", "w"][:n]
    chart = Chart.box(coords, [(-2.0, 2.0)] * n)
    return MetricField.diagonal(chart, (["-1"] if lorentzian else ["1"]) + ["1"] * (n - 1))


def eds(n):
    return EdSSolution(n).spec().assemble()


class TestStressTensor:
    def test_constant_potential(self, rng):
        m = random_analytic_model(3, rng)
        f = ScalarField.parse(m.chart, "4")
        assert not stress_tensor(m.g, f, sample_points(m.chart, 3, rng)).any()

    def test_minkowski_linear_potential(self):
        g = flat(2, lorentzian=True, coords=["t", "x"])
        T = stress_tensor(g, ScalarField.parse(g.chart, "x"), np.zeros((1, 2)))[0]
        assert_allclose(T, [[0.5, 0.0], [0.0, 0.5]])

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_eds_time_component(self, n, rng):
        g, f = eds(n)
        p = sample_points(g.chart, 6, rng)
        T = stress_tensor(g, f, p)
        assert_allclose(T[:, -1, -1], (n - 1) / (2 * n * p[:, -1] ** 2), rtol=1e-13)


class TestResiduals:
    def test_flat_constant(self, rng):
        g = flat(3)
        E, lap = full_residual(g, ScalarField.parse(g.chart, "1"), sample_points(g.chart, 4, rng))
        assert not E.any() and not lap.any()

    @pytest.mark.parametrize("n", [2, 3, 4, 6])
    def test_eds_solves_full_equations(self, n, rng):
        g, f = eds(n)
        E, lap = full_residual(g, f, sample_points(g.chart, 10, rng))
        assert np.abs(E).max() <= 1e-9 and np.abs(lap).max() <= 1e-10

    def test_sine_negative_control(self):
        chart = Chart.torus(["x", "y"])
        g = MetricField.diagonal(chart, ["1", "1"])
        f = ScalarField.parse(chart, "sin(x)")
        E, lap = full_residual(g, f, np.array([[math.pi / 2, 0.3], [1.0, 1.0]]))
        assert_allclose(lap[0], -1.0)
        assert_allclose(lap[1], -math.sin(1.0))
        assert np.abs(E[1]).max() > 0.1

    def test_reduced_on_eds(self, rng):
        g, f = eds(3)
        E, lap = reduced_residual(g, f, sample_points(g.chart, 10, rng))
        assert np.abs(E).max() <= 1e-9 and np.abs(lap).max() <= 1e-10

    def test_reduced_on_sphere(self, rng):
        m = sphere_model(3)
        p = sample_points(m.chart, 5, rng)
        E, _ = reduced_residual(m.g, m.f, p)
        assert_allclose(E, 2 * Frame.at(m.g, p).g.value, atol=1e-9)

    def test_reduced_needs_three_dimensions(self):
        g = flat(2)
        with pytest.raises(DimensionError):
            reduced_residual(g, ScalarField.parse(g.chart, "x"), np.zeros((1, 2)))


class TestTraceGap:
    def test_eds(self, rng):
        g, f = eds(4)
        assert np.abs(trace_gap(g, f, sample_points(g.chart, 8, rng))).max() <= 1e-12

    def test_unit_three_sphere(self, rng):
        m = sphere_model(3)
        assert_allclose(trace_gap(m.g, m.f, sample_points(m.chart, 5, rng)), 6.0, rtol=1e-12)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_trace_identity(self, n, rng):
        for lorentzian in (False, True):
            m = random_analytic_model(n, rng, lorentzian=lorentzian)
            p = sample_points(m.chart, 6, rng)
            fr = Frame.at(m.g, p, order=2)
            E, _ = full_residual(fr, m.f)
            tr = np.einsum("bij,bij->b", fr.g_inv.value, E)
            assert_allclose(tr, (1 - n / 2) * trace_gap(fr, m.f), rtol=0, atol=1e-12)


class TestEquivalence:
    @pytest.mark.parametrize("n", [3, 4])
    def test_eds(self, n, rng):
        g, f = eds(n)
        res = equivalence_check(g, f, sample_points(g.chart, 8, rng))
        assert res.ok
        assert res.full_norm.max() <= 1e-9 and res.reduced_norm.max() <= 1e-9

    def test_random_instances(self, rng):
        for _ in range(5):
            m = random_analytic_model(4, rng, lorentzian=bool(rng.integers(2)))
            res = equivalence_check(m.g, m.f, sample_points(m.chart, 5, rng))
            assert res.ok
            assert res.full_from_reduced_err.max() <= 1e-12

    def test_ricci_flat_constant(self, rng):
        g = flat(3)
        res = equivalence_check(g, ScalarField.parse(g.chart, "2"), sample_points(g.chart, 3, rng))
        assert res.ok and not res.full_norm.any()


HARMONIC = [
    ("sin(x)*sinh(y)", False),
    ("exp(x)*cos(y)", False),
    ("3*x^2*y - y^3", False),
    ("sin(x)*cosh(y)", False),
    ("exp(0.7*x)*sin(0.7*y) + 2*x - y", False),
    ("x", True),
    ("0.3*x + 1.1*y", True),
    ("cosh(x)*sin(y)", False),
]


class TestDivergence:
    @pytest.mark.parametrize("text, lorentzian", HARMONIC)
    def test_harmonic_potentials_are_divergence_free(self, text, lorentzian, rng):
        coords = ["t", "x"] if lorentzian else ["x", "y"]
        g = flat(2, lorentzian, coords)
        f = ScalarField.parse(g.chart, text.replace("y", "t") if lorentzian else text)
        p = sample_points(g.chart, 50, rng)
        check = divergence_check(g, f, p)
        assert np.abs(check.lap_df).max() <= 1e-10
        assert np.abs(check.div_T).max() <= 1e-9

    def test_constant_potential(self, rng):
        m = random_analytic_model(3, rng)
        check = divergence_check(m.g, ScalarField.parse(m.chart, "1"), sample_points(m.chart, 4, rng))
        assert not np.abs(check.div_T).max() > 1e-15

    def test_sine_decomposition(self):
        g = flat(2)
        p = np.array([[math.pi / 4, 0.2]])
        check = divergence_check(g, ScalarField.parse(g.chart, "sin(x)"), p)
        assert_allclose(check.div_T[0], [-0.5, 0.0], atol=1e-15)
        assert_allclose(check.div_T, check.lap_df, atol=1e-15)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_proof_identities_for_arbitrary_potentials(self, n, rng):
        m = random_analytic_model(n, rng, lorentzian=n == 4)
        check = divergence_check(m.g, m.f, sample_points(m.chart, 10, rng))
        assert np.abs(check.identity_dfdf).max() <= 1e-9
        assert np.abs(check.identity_norm_g).max() <= 1e-9
        assert_allclose(check.div_T, check.lap_df, atol=1e-9)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_eds_is_divergence_free(self, n, rng):
        g, f = eds(n)
        assert np.abs(divergence_check(g, f, sample_points(g.chart, 10, rng)).div_T).max() <= 1e-9


def _random_sym(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return (a + a.T) / 2


def _random_metric(rng, n):
    g = _random_sym(rng, n, 0.2) + np.diag(rng.choice([-1.0, 1.0], size=n) * rng.uniform(1, 2, size=n))
    return g, np.linalg.inv(g)


class TestSteadyCharacterization:
    def test_flat_constant_positive(self, rng):
        g = flat(3)
        recs = steady_check(g, ScalarField.parse(g.chart, "5"), sample_points(g.chart, 5, rng))
        for r in recs:
            assert r.field_res_zero and r.hess_zero and r.qe0_res_zero and r.holds

    def test_eds_negative_control(self, rng):
        g, f = eds(3)
        for r in steady_check(g, f, sample_points(g.chart, 10, rng)):
            assert r.field_res_zero
            assert not r.hess_zero
            assert not r.qe0_res_zero
            assert r.holds

    def test_cancellation(self, rng):
        g, gi = _random_metric(rng, 4)
        df = rng.normal(size=4)
        rec = steady_predicates(np.outer(df, df), np.zeros((4, 4)), df, g, gi)
        assert rec.qe0_res_zero and rec.field_res_zero and rec.holds

    def test_fuzzed_instances(self, rng):
        violations = []
        for k in range(100):
            n = int(rng.integers(3, 6))
            g, gi = _random_metric(rng, n)
            df = rng.normal(size=n)
            kind = k % 4
            if kind == 0:  # critical with parallel gradient
                ric, hess = np.outer(df, df), np.zeros((n, n))
            elif kind == 1:  # steady quasi-Einstein, Hess f != 0
                hess = _random_sym(rng, n)
                ric = np.outer(df, df) - hess
            elif kind == 2:  # critical with trace-free Hessian
                hess = _random_sym(rng, n)
                hess -= np.einsum("ij,ij->", gi, hess) / n * g
                ric = np.outer(df, df)
            else:  # generic data
                ric, hess = _random_sym(rng, n), _random_sym(rng, n)
            rec = steady_predicates(ric, hess, df, g, gi)
            violations.extend(rec.violations)
            if kind == 0:
                assert rec.field_res_zero and rec.qe0_res_zero
            if kind == 1:
                assert rec.qe0_res_zero and not rec.hess_zero and not rec.field_res_zero
        assert violations == []


class TestReport:
    def test_report_contents(self, rng):
        g, f = eds(3)
        rep = residual_report("eds", g, f, sample_points(g.chart, 5, rng), tol=1e-9)
        assert set(rep.aggregates) == {"full_eq", "laplacian", "div_Tf", "reduced_eq", "trace_gap"}
        assert rep.passed
        data = json.loads(rep.to_json())
        assert data["pass"] is True and len(data["points"]) == 5

    def test_two_dimensional_report_skips_reduced(self, rng):
        g = flat(2)
        rep = residual_report("flat", g, ScalarField.parse(g.chart, "sin(x)"), sample_points(g.chart, 3, rng))
        assert "reduced_eq" not in rep.aggregates
        assert not rep.passed

    def test_quasi_einstein_extra(self, rng):
        from befield.bakry_emery import BEParam

        m = sphere_model(2)
        rep = residual_report("s2", m.g, m.f, sample_points(m.chart, 5, rng), m=BEParam.infinite())
        qe = rep.extra["quasi_einstein"]
        assert qe["label"] == "shrinking" and qe["best_lambda"] == pytest.approx(1.0)

    def test_round_trip(self, rng):
        g, f = eds(3)
        rep = residual_report("eds", g, f, sample_points(g.chart, 3, rng))
        assert ResidualReport.from_dict(json.loads(rep.to_json())).to_json() == rep.to_json()

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["a", "b", "c"]),
                st.lists(st.tuples(st.floats(-1, 1), st.floats(0, 1)), min_size=1, max_size=3),
                st.sampled_from([None, 1, 2]),
            ),
            min_size=3,
            max_size=3,
        )
    )
    def test_merge_is_associative_and_commutative(self, specs):
        reps = []
        for name, recs, seed in specs:
            r = ResidualReport(name, {"full_eq": 1e-9})
            for x, v in recs:
                r.add([x, 0.0], {"full_eq": v})
            if seed is not None:
                r.extra["seed"] = seed
            reps.append(r)
        a, b, c = reps
        left = a.merge(b).merge(c).to_json()
        assert a.merge(b.merge(c)).to_json() == left
        assert c.merge(a).merge(b).to_json() == left
        merged = merge_reports(reps)
        assert merged.aggregates["full_eq"] == max(r.aggregates["full_eq"] for r in reps)


def test_check_alias():
    from befield.field_eq import steady_check, theorem3_check

    assert theorem3_check is steady_check
