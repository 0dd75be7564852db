import numpy as np
import pytest
from hypothesis import given, strategies as st

from apnn import autodiff as ad
from apnn.errors import ConfigurationError, NumericError
from apnn.network import (
    NetworkSpec,
    ParameterSet,
    eval_with_input_derivatives,
    init_parameters,
    mlp_apply,
    mlp_eval,
    mlp_forward,
    with_directions,
)


def test_square_gradient():
    val, grad = ad.value_and_grad(lambda th: (th * th).sum(), np.array([2.0]))
    assert val == 4.0
    assert grad[0] == pytest.approx(4.0, abs=1e-15)


def test_gradient_through_input_derivative():
    # d/dx (theta x) = theta, loss = theta^2 -> 2 theta
    def loss(th):
        x = ad.Dual(np.array([0.7]), (np.array([1.0]),))
        return ((th * x).tangents[0] ** 2).sum()

    assert ad.loss_gradient(loss, np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-14)


def test_check_gradient_sum_of_squares():
    th = np.linspace(-1, 2, 7)
    assert ad.check_gradient(lambda p: (p * p).sum(), th) <= 1e-9


def test_check_gradient_tanh_unit():
    th = np.array([0.3, -0.8, 0.5])

    def fn(p):
        return ad.tanh(p[0] * 1.3 + p[1] * -0.4 + p[2])

    assert ad.check_gradient(fn, th) <= 1e-7


def test_check_gradient_rejects_bad_step():
    with pytest.raises(ConfigurationError):
        ad.check_gradient(lambda p: (p * p).sum(), np.ones(2), step=0.0)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_overflow_reports_node():
    def fn(p):
        return ad.exp(p * 1000.0).sum()

    with pytest.raises(NumericError) as info:
        ad.value_and_grad(fn, np.array([1.0]))
    assert info.value.op_index is not None
    assert info.value.op_name == "exp"


def test_tape_cleared_after_step():
    tape = ad.Tape()
    leaf = tape.leaf(np.ones(3))
    out = (leaf * leaf).sum()
    tape.backward(out)
    assert np.allclose(leaf.grad, 2.0)
    tape.clear()
    assert tape.nodes == []


def test_eval_point_square():
    val, d = ad.eval_with_input_derivatives(lambda z: z * z, [3.0], [0])
    assert val == 9.0
    assert d[0] == 6.0


def test_eval_rejects_bad_direction():
    with pytest.raises(ConfigurationError):
        ad.eval_with_input_derivatives(lambda z: z, [1.0], [1])


def test_zero_weight_network_is_constant():
    spec = NetworkSpec((3, 4, 4, 1))
    b = [np.full(4, 0.3), np.full(4, -0.2), np.array([0.1])]
    params = ParameterSet([np.zeros((4, 3)), np.zeros((4, 4)), np.zeros((1, 4))], b)
    val, d = eval_with_input_derivatives(params, spec, [0.2, 0.4, -0.5], [0, 1, 2])
    assert val == pytest.approx(0.1)
    assert all(v == 0.0 for v in d.values())
    # with a nonzero last layer the value is the composed activation of the biases
    params.weights[2] = np.ones((1, 4))
    val, _ = eval_with_input_derivatives(params, spec, [0.2, 0.4, -0.5], [0])
    expect = 4 * np.tanh(-0.2) + 0.1
    assert val == pytest.approx(expect, rel=1e-15)


def test_network_input_derivatives_match_fd():
    spec = NetworkSpec((3, 16, 16, 1))
    params = init_parameters(spec, 11)
    point = np.array([0.3, 0.6, -0.2])
    val, d = eval_with_input_derivatives(params, spec, point, [0, 1, 2])
    assert val == pytest.approx(mlp_forward(params, spec, point), rel=1e-14)
    h = 1e-5
    for i in range(3):
        e = np.eye(3)[i] * h
        fd = (mlp_forward(params, spec, point + e) - mlp_forward(params, spec, point - e)) / (2 * h)
        assert abs(d[i] - fd) <= 1e-6 * max(1.0, abs(fd))


def test_network_dimension_mismatch():
    spec = NetworkSpec((2, 4, 1))
    with pytest.raises(ConfigurationError):
        eval_with_input_derivatives(init_parameters(spec, 0), spec, [0.1, 0.2, 0.3], [0])


OPS = st.sampled_from(["add_c", "mul_c", "add_x", "mul_x", "tanh", "exp"])


@given(ops=st.lists(st.tuples(OPS, st.floats(-1.5, 1.5)), min_size=1, max_size=10),
       x0=st.floats(-1.0, 1.0))
def test_chain_rule_random_expressions(ops, x0):
    def build(x):
        h = x
        for op, c in ops:
            if op == "add_c":
                h = h + c
            elif op == "mul_c":
                h = h * c
            elif op == "add_x":
                h = h + x
            elif op == "mul_x":
                h = h * x
            elif op == "tanh":
                h = ad.tanh(h)
            else:
                h = ad.exp(ad.tanh(h) * 2.0) if abs(ad.value_of(getattr(h, "value", h))) > 5 else ad.exp(h)
        return h

    out = build(ad.Dual(np.float64(x0), (np.float64(1.0),)))
    step = 1e-6
    fd = (build(np.float64(x0 + step)) - build(np.float64(x0 - step))) / (2 * step)
    tangent = float(out.tangents[0])
    assert abs(tangent - fd) <= 1e-6 * max(1.0, abs(fd))


def _mixed_loss(params, spec, X, xp):
    out = mlp_apply(params, spec, with_directions(X, (0, 1)))
    v, dt, dx = out.value, out.tangents[0], out.tangents[1]
    r = dt + 0.5 * dx - v * v
    return (r * r).sum() + (v * v).sum()


def test_reverse_matches_forward_per_parameter():
    # complex-step derivatives are forward-mode derivatives exact to rounding
    spec = NetworkSpec((2, 5, 3, 1))
    assert spec.n_params <= 50
    theta = init_parameters(spec, 5).flat()
    X = np.random.default_rng(0).uniform(size=(6, 2))
    _, grad = ad.value_and_grad(lambda th: _mixed_loss(ParameterSet.from_flat(spec, th), spec, X, None), theta)
    h = 1e-30
    for k in range(theta.size):
        th = theta.astype(complex)
        th[k] += 1j * h
        val = _mixed_loss(ParameterSet.from_flat(spec, th), spec, X, None)
        assert grad[k] == pytest.approx(np.imag(val) / h, rel=1e-11, abs=1e-13)


def test_gradient_linearity():
    spec = NetworkSpec((2, 6, 1))
    theta = init_parameters(spec, 2).flat()
    X = np.random.default_rng(1).uniform(size=(5, 2))

    def l1(th):
        return (mlp_eval(ParameterSet.from_flat(spec, th), spec, X) ** 2).sum()

    def l2(th):
        return ad.tanh(mlp_eval(ParameterSet.from_flat(spec, th), spec, X, (1,)).tangents[0]).sum()

    a, b = 0.7, -2.5
    g = ad.loss_gradient(lambda th: l1(th) * a + l2(th) * b, theta)
    ref = a * ad.loss_gradient(l1, theta) + b * ad.loss_gradient(l2, theta)
    np.testing.assert_allclose(g, ref, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("dirs", [(), (0,), (0, 1), (1, 2, 0)])
def test_fused_network_matches_composed_ops(dirs):
    spec = NetworkSpec((3, 7, 5, 1))
    theta = init_parameters(spec, 9).flat()
    X = np.random.default_rng(2).uniform(-1, 1, size=(11, 3))
    wts = np.random.default_rng(3).normal(size=(1 + len(dirs), 11))

    def reduce(out):
        parts = [out] if not dirs else [out.value, *out.tangents]
        return sum(((p * w) ** 2).sum() for p, w in zip(parts, wts))

    def fused(th):
        return reduce(mlp_eval(ParameterSet.from_flat(spec, th), spec, X, dirs))

    def composed(th):
        xin = with_directions(X, dirs) if dirs else X
        return reduce(mlp_apply(ParameterSet.from_flat(spec, th), spec, xin))

    v1, g1 = ad.value_and_grad(fused, theta)
    v2, g2 = ad.value_and_grad(composed, theta)
    assert v1 == pytest.approx(v2, rel=1e-13)
    np.testing.assert_allclose(g1, g2, rtol=1e-11, atol=1e-13)


def test_fused_network_fd():
    spec = NetworkSpec((2, 6, 6, 1))
    theta = init_parameters(spec, 4).flat()
    X = np.random.default_rng(5).uniform(size=(8, 2))

    def fn(th):
        out = mlp_eval(ParameterSet.from_flat(spec, th), spec, X, (0, 1))
        return ((out.tangents[0] - out.value) ** 2).sum() + (out.tangents[1] ** 2).sum()

    assert ad.check_gradient(fn, theta) <= 1e-7
