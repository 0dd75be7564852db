import numpy as np
import pytest

from apnn.errors import ConfigurationError
from apnn.problems import make_problem
from apnn.quadrature import gauss_legendre
from apnn.sampling import make_rng, sample_batch, split_rng


def _same(a, b):
    np.testing.assert_array_equal(a.interior_t, b.interior_t)
    np.testing.assert_array_equal(a.interior_x, b.interior_x)
    np.testing.assert_array_equal(a.boundary_t[0], b.boundary_t[0])
    np.testing.assert_array_equal(a.boundary_t[1], b.boundary_t[1])
    np.testing.assert_array_equal(a.initial_x, b.initial_x)
    np.testing.assert_array_equal(a.rule.nodes, b.rule.nodes)


@pytest.mark.parametrize("mode", ["quadrature", "monte-carlo"])
def test_seeded_batches_repeat(mode):
    p = make_problem("III")
    a = sample_batch(p, (20, 10, 15), make_rng(4), velocity_mode=mode)
    b = sample_batch(p, (20, 10, 15), make_rng(4), velocity_mode=mode)
    _same(a, b)


def test_stream_advances():
    p = make_problem("II")
    rng = make_rng(0)
    a = sample_batch(p, (8, 4, 8), rng)
    b = sample_batch(p, (8, 4, 8), rng)
    assert not np.array_equal(a.interior_x, b.interior_x)


@pytest.mark.parametrize("pid", ["I", "II", "III", "IV"])
def test_points_inside_domain(pid):
    p = make_problem(pid)
    b = sample_batch(p, (50, 30, 40, 20), make_rng(1))
    for t in (b.interior_t, b.micro_t, *b.boundary_t):
        assert np.all((t >= 0) & (t <= p.T))
    for x in (b.interior_x, b.micro_x, b.initial_x):
        assert np.all((x >= p.x_L) & (x <= p.x_R))
    assert len(b.boundary_t[0]) == len(b.boundary_t[1]) == 40
    assert len(b.initial_x) == 20
    assert b.has_separate_micro and len(b.micro_t) == 30


def test_inflow_orientation():
    p = make_problem("II")
    b = sample_batch(p, (4, 6, 4), make_rng(2), gauss_legendre(30))
    pts = b.boundary_points(p)
    left = pts[pts[:, 1] == p.x_L]
    right = pts[pts[:, 1] == p.x_R]
    assert np.all(left[:, 2] > 0) and np.all(right[:, 2] < 0)
    assert len(left) == 6 * 15 and len(right) == 6 * 15


def test_uniform_law_of_interior_x():
    p = make_problem("II")
    b = sample_batch(p, (100000, 1, 1), make_rng(3))
    sigma = np.sqrt(1 / 12 / 100000)
    assert abs(b.interior_x.mean() - 0.5) <= 3 * sigma


def test_split_streams_differ():
    a, b = split_rng(7, 2)
    assert a.uniform() != b.uniform()
    c, _ = split_rng(7, 2)
    assert split_rng(7, 2)[0].uniform() == c.uniform()


@pytest.mark.parametrize("sizes", [(0, 1, 1), (1, 1), (4, -1, 2, 2), (1, 2, 3, 4, 5)])
def test_bad_sizes(sizes):
    with pytest.raises(ConfigurationError):
        sample_batch(make_problem("I"), sizes, make_rng(0))


def test_bad_velocity_mode():
    with pytest.raises(ConfigurationError):
        sample_batch(make_problem("I"), (1, 1, 1), make_rng(0), velocity_mode="sobol")


def test_monte_carlo_velocities():
    b = sample_batch(make_problem("II"), (3, 3, 3), make_rng(0), velocity_mode="monte-carlo", n_velocity_samples=64)
    assert b.rule.n == 64 and b.rule.kind == "monte-carlo"


def test_periodic_sides_share_times():
    b = sample_batch(make_problem("I"), (4, 5, 4), make_rng(0))
    np.testing.assert_array_equal(b.boundary_t[0], b.boundary_t[1])
