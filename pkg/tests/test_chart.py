import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from befield.chart import (
    Chart,
    MetricField,
    SampleGrid,
    ScalarField,
    SignatureChangeError,
    SingularMetricError,
    SymTensorField,
    UnsupportedDomainError,
    check_nondegenerate,
    lattice_points,
    metric_jet,
    sample_points,
)
from befield.cosmology import EdSSolution


class TestChart:
    def test_dimension_at_least_two(self):
        with pytest.raises(ValueError):
            Chart.box(["x"])

    def test_distinct_names(self):
        with pytest.raises(ValueError):
            Chart.box(["x", "x"])

    def test_torus_is_periodic(self):
        chart = Chart.torus(["x", "y"])
        assert chart.periodic
        assert chart.axes[0].length == pytest.approx(2 * math.pi)


class TestMetricJet:
    def test_euclidean(self, rng):
        chart = Chart.box(["x", "y"])
        g = MetricField.diagonal(chart, ["1", "1"])
        j = metric_jet(g, rng.uniform(-1, 1, size=(5, 2)))
        assert_allclose(j.value, np.broadcast_to(np.eye(2), (5, 2, 2)))
        for d in j.derivs:
            assert not d.any()

    def test_eds_time_derivative(self):
        g, _ = EdSSolution(3).spec().assemble()
        j = metric_jet(g, np.array([[0.1, 0.2, 0.3, 1.0]]))
        assert_allclose(j.value[0, 0, 0], 1.0)
        assert_allclose(j.d1[0, 3, 0, 0], 2.0 / 3.0)

    def test_symmetric_storage(self):
        chart = Chart.box(["x", "y", "z"])
        g = MetricField(chart, {"x,y": "0.1*sin(z)", "x,x": "1", "y,y": "1", "z,z": "2"})
        for i in range(3):
            for j in range(3):
                assert g.component(i, j) is g.component(j, i)

    def test_matrix_input_must_be_symmetric(self):
        chart = Chart.box(["x", "y"])
        with pytest.raises(ValueError):
            MetricField(chart, [["1", "x"], ["y", "1"]])

    def test_undeclared_coordinate(self):
        chart = Chart.box(["x", "y"])
        with pytest.raises(ValueError):
            ScalarField.parse(chart, "z")

    def test_component_given_twice(self):
        chart = Chart.box(["x", "y"])
        with pytest.raises(ValueError):
            SymTensorField(chart, {"x,y": "1", "y,x": "2"})


class TestNondegenerate:
    def test_minkowski_signature(self):
        chart = Chart.box(["t", "x", "y", "z"])
        g = MetricField.diagonal(chart, ["-1", "1", "1", "1"])
        assert check_nondegenerate(g, lattice_points(chart, 2)) == (3, 1)

    def test_signature_change(self):
        chart = Chart.box(["x", "y"])
        g = MetricField.diagonal(chart, ["x", "1"])
        pts = np.array([[-0.5, 0.0], [0.5, 0.0]])
        with pytest.raises(SignatureChangeError):
            check_nondegenerate(g, pts)

    def test_singular(self):
        chart = Chart.box(["x", "y"])
        g = MetricField.diagonal(chart, ["x^2", "1"])
        with pytest.raises(SingularMetricError) as info:
            check_nondegenerate(g, np.array([[0.5, 0.0], [1e-6, 0.3]]))
        assert info.value.point == pytest.approx((1e-6, 0.3))

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_warped_signature(self, n, rng):
        spec = EdSSolution(n).spec()
        g, _ = spec.assemble()
        assert check_nondegenerate(g, sample_points(g.chart, 20, rng)) == (n, 1)


class TestSampleGrid:
    def test_periodic_nodes_exclude_endpoint(self):
        grid = SampleGrid(Chart.torus(["x", "y"]), (4, 3))
        xs = np.unique(grid.points[:, 0])
        assert_allclose(xs, np.arange(4) * math.pi / 2)
        assert grid.points.shape == (12, 2)

    @given(st.lists(st.integers(1, 9), min_size=2, max_size=3))
    def test_weights_sum_to_volume(self, nodes):
        chart = Chart.box([f"x{i}" for i in range(len(nodes))], [(0.0, 1.5)] * len(nodes))
        grid = SampleGrid(chart, nodes)
        assert_allclose(grid.weights.sum(), 1.5 ** len(nodes), rtol=1e-13)

    @given(st.floats(-3.0, 3.0))
    def test_translation_invariance(self, shift):
        chart = Chart.torus(["x", "y"])
        grid = SampleGrid(chart, (32, 32))
        f = lambda p: np.exp(np.sin(p[:, 0] + shift)) * np.cos(p[:, 1]) ** 2  # noqa: E731
        g = lambda p: np.exp(np.sin(p[:, 0])) * np.cos(p[:, 1]) ** 2  # noqa: E731
        assert_allclose(grid.integrate(f(grid.points)), grid.integrate(g(grid.points)), rtol=1e-12)

    def test_spectral_accuracy(self):
        # integral of exp(cos x) over one period is 2 pi I_0(1)
        grid = SampleGrid(Chart.torus(["x", "y"]), (24, 4))
        value = grid.integrate(np.exp(np.cos(grid.points[:, 0])))
        assert_allclose(value, 2 * math.pi * 2 * math.pi * 1.2660658777520082, rtol=1e-14)

    def test_open_axes_cannot_integrate(self):
        grid = SampleGrid(Chart.box(["x", "y"]), (4, 4))
        with pytest.raises(UnsupportedDomainError):
            grid.integrate(np.ones(16))

    def test_chunks_cover_all_points(self):
        grid = SampleGrid(Chart.torus(["x", "y"]), (5, 7))
        seen = np.concatenate([np.arange(35)[sl] for sl in grid.chunks(8)])
        assert_allclose(seen, np.arange(35))


class TestSampling:
    def test_sample_points_respect_margin(self, rng):
        chart = Chart.box(["x", "y"], [(0.0, 1.0), (2.0, 4.0)])
        pts = sample_points(chart, 200, rng, margin=0.1)
        assert pts[:, 0].min() >= 0.1 and pts[:, 0].max() <= 0.9
        assert pts[:, 1].min() >= 2.2 and pts[:, 1].max() <= 3.8

    def test_sampling_is_seeded(self):
        chart = Chart.torus(["x", "y"])
        a = sample_points(chart, 5, np.random.default_rng(3))
        b = sample_points(chart, 5, np.random.default_rng(3))
        assert np.array_equal(a, b)
