import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from otguide.errors import DomainError, GradientSingularityError, InputError, ShapeError
from otguide.measures import (
    build_cost_matrix,
    cosine_distance,
    cost_gradient,
    distance_grad,
    geodesic_distance,
    uniform_weights,
)

from conftest import random_unit

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


@pytest.mark.parametrize(
    "u, v, expected",
    [((3, 4), (3, 4), 0.0), ((1, 0), (0, 1), 1.0), ((1, 0), (-1, 0), 2.0)],
)
def test_cosine_examples(u, v, expected):
    assert cosine_distance(u, v) == expected


@pytest.mark.parametrize(
    "u, v, expected",
    [((2, 5), (2, 5), 0.0), ((1, 0), (0, 1), math.pi / 2), ((1, 0), (-1, 0), math.pi)],
)
def test_geodesic_examples(u, v, expected):
    assert geodesic_distance(u, v) == pytest.approx(expected, abs=1e-12)


def test_distance_errors():
    with pytest.raises(DomainError):
        cosine_distance((0, 0), (1, 0))
    with pytest.raises(ShapeError):
        geodesic_distance((1, 0), (1, 0, 0))
    with pytest.raises(InputError):
        distance_grad("euclid", (1, 0), (0, 1))


def test_cosine_grad_closed_form():
    np.testing.assert_array_equal(distance_grad("cosine", (1, 0), (0, 1)), [0.0, -1.0])
    u = np.array([0.6, 0.8])
    np.testing.assert_allclose(distance_grad("cosine", u, u), 0.0, atol=1e-15)


@pytest.mark.parametrize("metric", ["cosine", "geodesic"])
def test_distance_grad_matches_finite_differences(rng, metric):
    fn = {"cosine": cosine_distance, "geodesic": geodesic_distance}[metric]
    h = 1e-5
    for _ in range(20):
        u, v = random_unit(rng, 2, 6)
        fd = np.array([(fn(u + h * e, v) - fn(u - h * e, v)) / (2 * h) for e in np.eye(6)])
        g = distance_grad(metric, u, v)
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


def test_geodesic_grad_singular_at_collinear():
    with pytest.raises(GradientSingularityError):
        distance_grad("geodesic", (1, 0), (2, 0))
    with pytest.raises(GradientSingularityError):
        distance_grad("geodesic", (1, 0), (-1, 1e-6))


def test_cost_gradient_is_weighted_sum_of_pair_gradients(rng):
    U = rng.standard_normal((4, 5))
    V = rng.standard_normal((3, 5))
    W = rng.uniform(size=(4, 3))
    for metric in ("cosine", "geodesic"):
        G = cost_gradient(U, V, W, metric)
        expect = np.array([sum(W[i, j] * distance_grad(metric, U[i], V[j]) for j in range(3)) for i in range(4)])
        np.testing.assert_allclose(G, expect, rtol=1e-12, atol=1e-14)


def test_build_cost_matrix_examples():
    np.testing.assert_array_equal(build_cost_matrix([(1, 0), (0, 1)], [(1, 0)]), [[0.0], [1.0]])
    assert build_cost_matrix([(1, 2)], [(3, 1)]).shape == (1, 1)


def test_build_cost_matrix_transpose_symmetry(rng):
    us = random_unit(rng, 4, 7)
    vs = random_unit(rng, 3, 7)
    for metric in ("cosine", "geodesic"):
        np.testing.assert_allclose(build_cost_matrix(us, vs, metric), build_cost_matrix(vs, us, metric).T, atol=1e-15)


def test_build_cost_matrix_entries_bitwise(rng):
    us = rng.standard_normal((5, 4))
    vs = rng.standard_normal((3, 4))
    C = build_cost_matrix(us, vs, "geodesic")
    for i in range(5):
        for j in range(3):
            assert C[i, j] == geodesic_distance(us[i], vs[j])


def test_build_cost_matrix_reports_location():
    with pytest.raises(DomainError, match=r"\(1, 0\)"):
        build_cost_matrix([(1, 0), (0, 0)], [(1, 1)])


def test_uniform_weights():
    np.testing.assert_array_equal(uniform_weights(1), [1.0])
    np.testing.assert_array_equal(uniform_weights(4), [0.25] * 4)
    with pytest.raises(InputError):
        uniform_weights(0)


def test_uniform_weights_sum():
    for k in (1, 2, 4, 8, 64, 1024):
        assert math.fsum(uniform_weights(k)) == 1.0
    for k in range(1, 500):
        w = uniform_weights(k)
        assert np.all(w == w[0])
        assert abs(math.fsum(w) - 1.0) <= 2.0**-53


@settings(max_examples=60, deadline=None)
@given(vec3, vec3, st.floats(0.01, 100), st.floats(0.01, 100))
def test_cosine_scale_invariance(u, v, alpha, beta):
    assert cosine_distance(alpha * u, beta * v) == pytest.approx(cosine_distance(u, v), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(vec3, vec3)
def test_geodesic_symmetric_nonnegative(u, v):
    d = geodesic_distance(u, v)
    assert 0.0 <= d <= math.pi
    assert d == geodesic_distance(v, u)


@settings(max_examples=60, deadline=None)
@given(vec3, vec3)
def test_cosine_gradient_tangent_to_sphere(u, v):
    u = u / np.linalg.norm(u)
    assert abs(np.dot(distance_grad("cosine", u, v), u)) <= 1e-10
