import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geoforest.synthdata import (
    CONTINUOUS,
    DISCRETE,
    GMM_WEIGHTS,
    SPHERE_RADIUS,
    GeodesicOracle,
    NoiseSpec,
    add_noise,
    gen_gmm,
    gen_helix,
    gen_linear,
    gen_sphere,
    generate,
    helix_arclength,
    helix_speed,
    open_grid,
    rescale01,
    sphere_grid_shape,
)
from oracles import helix_quad

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestLinear:
    def test_midpoint_substitution(self):
        X, oracle = gen_linear(3)
        assert oracle.params[1, 0] == 0.5
        np.testing.assert_array_equal(X[1], [2.0, 3.0, 4.5])

    def test_endpoint_distance(self):
        _, oracle = gen_linear(2)
        ends = GeodesicOracle(CONTINUOUS, "linear", [0.0, 1.0], scale=oracle.scale)
        assert ends.distance(0, 1) == pytest.approx(math.sqrt(133), rel=1e-15)
        assert ends.distance(0, 1) == pytest.approx(np.linalg.norm([4.0, 6.0, 9.0]), rel=1e-15)

    def test_self_distance_zero(self):
        _, oracle = gen_linear(10)
        assert all(oracle.distance(i, i) == 0 for i in range(10))

    def test_open_grid(self):
        t = open_grid(0.0, 1.0, 4)
        np.testing.assert_allclose(t, [0.125, 0.375, 0.625, 0.875])

    def test_matches_euclidean(self):
        X, oracle = gen_linear(25)
        diff = np.linalg.norm(X[:, None] - X[None], axis=2)
        np.testing.assert_allclose(oracle.distance_matrix(), diff, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("n", [0, 1])
    def test_too_small(self, n):
        with pytest.raises(ValueError):
            gen_linear(n)


class TestHelix:
    def test_parameterisation(self):
        X, oracle = gen_helix(50)
        t = oracle.params[:, 0]
        assert t.min() > 2 * math.pi and t.max() < 9 * math.pi
        np.testing.assert_allclose(X, np.stack([t * np.cos(t), t * np.sin(t), t], axis=1))

    def test_speed_matches_finite_differences(self):
        curve = lambda t: np.array([t * math.cos(t), t * math.sin(t), t])
        h = 1e-6
        for t in np.linspace(2 * math.pi, 9 * math.pi, 17):
            fd = np.linalg.norm(curve(t + h) - curve(t - h)) / (2 * h)
            assert fd == pytest.approx(float(helix_speed(t)), rel=1e-7)

    def test_short_arc(self):
        a = 2 * math.pi
        oracle = GeodesicOracle(CONTINUOUS, "helix", [a, a + 0.01])
        d = oracle.distance(0, 1)
        assert d == pytest.approx(helix_quad(a, a + 0.01), rel=1e-6)
        assert d == pytest.approx(0.01 * math.sqrt(2 + 4 * math.pi**2), rel=1e-3)

    def test_quadrature_agreement(self):
        rng = np.random.default_rng(0)
        for ta, tb in rng.uniform(2 * math.pi, 9 * math.pi, (100, 2)):
            oracle = GeodesicOracle(CONTINUOUS, "helix", [ta, tb])
            assert oracle.distance(0, 1) == pytest.approx(helix_quad(ta, tb), rel=1e-6)

    def test_antiderivative_is_increasing(self):
        t = np.linspace(2 * math.pi, 9 * math.pi, 1000)
        assert np.all(np.diff(helix_arclength(t)) > 0)

    def test_self_distance_zero(self):
        _, oracle = gen_helix(20)
        assert np.all(np.diag(oracle.distance_matrix()) == 0)


class TestSphere:
    def test_antipodal(self):
        oracle = GeodesicOracle(CONTINUOUS, "sphere", [[0.0, math.pi / 2], [math.pi, math.pi / 2]], radius=SPHERE_RADIUS)
        assert oracle.distance(0, 1) == pytest.approx(9 * math.pi, rel=1e-12)

    def test_quarter_circle(self):
        oracle = GeodesicOracle(CONTINUOUS, "sphere", [[0.0, math.pi / 2], [math.pi / 2, math.pi / 2]], radius=SPHERE_RADIUS)
        assert oracle.distance(0, 1) == pytest.approx(9 * math.pi / 2, rel=1e-12)

    def test_identical_points(self):
        oracle = GeodesicOracle(CONTINUOUS, "sphere", [[1.0, 1.0], [1.0, 1.0]], radius=SPHERE_RADIUS)
        assert oracle.distance(0, 1) == 0.0

    def test_points_on_sphere(self):
        X, oracle = gen_sphere(1000)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), SPHERE_RADIUS)
        assert oracle.n == 1000
        u, v = oracle.params.T
        assert u.min() > 0 and u.max() < 2 * math.pi and v.min() > 0 and v.max() < math.pi

    def test_arccos_formula(self):
        X, oracle = gen_sphere(60)
        cos = np.clip(X @ X.T / SPHERE_RADIUS**2, -1, 1)
        np.testing.assert_allclose(oracle.distance_matrix(), SPHERE_RADIUS * np.arccos(cos), atol=1e-6)

    @pytest.mark.parametrize("n, shape", [(1000, (40, 25)), (4, (2, 2)), (12, (4, 3)), (100, (10, 10))])
    def test_grid_shape(self, n, shape):
        assert sphere_grid_shape(n) == shape

    @pytest.mark.parametrize("n", [3, 7, 997])
    def test_infeasible(self, n):
        with pytest.raises(ValueError):
            gen_sphere(n)


class TestGMM:
    def test_weights(self):
        assert GMM_WEIGHTS == (0.3, 0.3, 0.4)

    def test_proportions(self):
        _, oracle = gen_gmm(10_000, seed=0)
        props = np.bincount(oracle.labels, minlength=3) / 10_000
        np.testing.assert_allclose(props, GMM_WEIGHTS, atol=0.02)

    def test_same_component(self):
        _, oracle = gen_gmm(30, seed=1)
        assert oracle.kind == DISCRETE
        assert all(oracle.same_component(i, i) for i in range(30))

    def test_component_means(self):
        X, oracle = gen_gmm(6000, seed=2)
        for label, centre in enumerate((-3.0, 0.0, 3.0)):
            np.testing.assert_allclose(X[oracle.labels == label].mean(axis=0), centre, atol=0.1)

    def test_seeded(self):
        a, _ = gen_gmm(50, seed=5)
        b, _ = gen_gmm(50, seed=5)
        c, _ = gen_gmm(50, seed=6)
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_too_small(self):
        with pytest.raises(ValueError):
            gen_gmm(2)


class TestNoise:
    def test_zero_dims_identity(self):
        X, _ = gen_helix(10)
        assert np.array_equal(add_noise(X, NoiseSpec(0)), X)

    def test_shape(self):
        X, _ = gen_linear(1000)
        assert add_noise(X, NoiseSpec(10_000, 70.0, 0)).shape == (1000, 10_003)

    def test_variance(self):
        X = np.zeros((10_000, 1))
        col = add_noise(X, NoiseSpec(1, 70.0, 3))[:, 1]
        assert col.var(ddof=1) == pytest.approx(70.0, abs=3.0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec(-1)
        with pytest.raises(ValueError):
            NoiseSpec(2, variance=0.0)

    @given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 4)), elements=finite), st.integers(0, 5))
    @settings(max_examples=50, deadline=None)
    def test_prefix_untouched(self, X, extra):
        Y = add_noise(X, NoiseSpec(extra, 5.0, 1))
        assert Y.shape == (X.shape[0], X.shape[1] + extra)
        assert np.array_equal(Y[:, : X.shape[1]], X)


class TestRescale:
    def test_examples(self):
        X = np.array([[0.0, 0.0, 4.0], [5.0, 0.5, 4.0], [10.0, 1.0, 4.0]])
        np.testing.assert_array_equal(rescale01(X), [[0, 0, 0], [0.5, 0.5, 0], [1, 1, 0]])

    @given(arrays(np.float64, st.tuples(st.integers(2, 10), st.integers(1, 4)), elements=finite))
    @settings(max_examples=100, deadline=None)
    def test_range_and_idempotence(self, X):
        Y = rescale01(X)
        assert np.all((Y >= 0) & (Y <= 1))
        assert np.array_equal(rescale01(Y), Y)


@pytest.mark.parametrize("name", ["linear", "helix", "sphere"])
def test_metric_axioms(name):
    _, oracle = generate(name, 200)
    D = oracle.distance_matrix()
    assert np.array_equal(D, D.T)
    assert np.all(D >= 0)
    assert np.all(np.diag(D) == 0)
    off = ~np.eye(200, dtype=bool)
    assert np.all(D[off] > 0)
    rng = np.random.default_rng(1)
    for i, j, k in rng.integers(0, 200, (100, 3)):
        assert D[i, k] <= D[i, j] + D[j, k] + 1e-9


def test_oracle_dict_round_trip():
    for name in ("linear", "helix", "sphere", "gmm"):
        _, oracle = generate(name, 24, seed=3)
        back = GeodesicOracle.from_dict(oracle.to_dict())
        assert np.array_equal(back.params, oracle.params)
        assert (back.kind, back.rule, back.radius, back.scale) == (oracle.kind, oracle.rule, oracle.radius, oracle.scale)


def test_unknown_dataset():
    with pytest.raises(ValueError):
        generate("swissroll", 10)
