import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from apnn.errors import ConfigurationError
from apnn.quadrature import gauss_legendre, monte_carlo_rule, project_complement, velocity_average


def test_one_point_rule():
    r = gauss_legendre(1)
    assert r.nodes.tolist() == [0.0]
    assert r.weights.tolist() == [2.0]


def test_two_point_rule():
    r = gauss_legendre(2)
    np.testing.assert_allclose(r.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], rtol=0, atol=1e-15)
    assert r.nodes[1] == pytest.approx(0.5773502691896258, abs=1e-15)
    np.testing.assert_allclose(r.weights, [1.0, 1.0], atol=1e-15)


def test_high_monomial_n30():
    r = gauss_legendre(30)
    assert np.sum(r.weights * r.nodes ** 58) == pytest.approx(2 / 59, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5, 8, 16, 30, 47, 64, 128, 256])
def test_rule_structure(n):
    r = gauss_legendre(n)
    assert r.n == n
    assert np.sum(r.weights) == pytest.approx(2.0, rel=1e-14)
    assert np.all(np.diff(r.nodes) > 0)
    assert np.all(r.weights > 0)
    assert np.all(np.abs(r.nodes) < 1)
    np.testing.assert_array_equal(r.nodes, -r.nodes[::-1])
    np.testing.assert_array_equal(r.weights, r.weights[::-1])


@pytest.mark.parametrize("n", [0, -3, 257])
def test_rule_size_bounds(n):
    with pytest.raises(ConfigurationError):
        gauss_legendre(n)


@pytest.mark.parametrize("n", [2, 7, 19, 40, 64])
def test_exact_for_degree_up_to_2n_minus_1(n):
    r = gauss_legendre(n)
    for d in range(2 * n):
        exact = 0.0 if d % 2 else 2.0 / (d + 1)
        got = np.sum(r.weights * r.nodes ** d)
        assert abs(got - exact) <= 1e-12 * max(1.0, abs(exact))


def test_average_examples(rule30):
    v = rule30.nodes
    assert velocity_average(np.full(30, 2.5), rule30) == pytest.approx(2.5, rel=1e-15)
    assert abs(velocity_average(v, rule30)) <= 1e-15
    assert abs(velocity_average(v * v, rule30) - 1 / 3) <= 1e-14


def test_average_length_mismatch(rule30):
    with pytest.raises(ConfigurationError):
        velocity_average(np.ones(29), rule30)


def test_average_batched(rule30):
    h = np.outer(np.arange(4.0), np.ones(30))
    np.testing.assert_allclose(velocity_average(h, rule30), np.arange(4.0), atol=1e-14)


def test_projection_examples(rule30):
    v = rule30.nodes
    np.testing.assert_allclose(project_complement(np.full(30, 3.0), rule30), 0.0, atol=1e-15)
    np.testing.assert_allclose(project_complement(v ** 3, rule30), v ** 3, atol=1e-15)


@given(arrays(np.float64, 30, elements=st.floats(-10, 10)))
def test_projection_properties(h):
    r = gauss_legendre(30)
    p = project_complement(h, r)
    assert abs(velocity_average(p, r)) <= 1e-15 * max(1.0, np.abs(h).max())
    np.testing.assert_allclose(project_complement(p, r), p, atol=1e-15 * max(1.0, np.abs(h).max()))


def test_monte_carlo_rule(rng):
    r = monte_carlo_rule(100, rng)
    assert r.kind == "monte-carlo"
    assert np.sum(r.weights) == pytest.approx(2.0)
    assert np.all(np.diff(r.nodes) >= 0)
    assert np.all(np.abs(r.nodes) <= 1)
