import numpy as np
import pytest

from apnn.errors import ConfigurationError
from apnn.network import (
    NetworkSpec,
    ParameterSet,
    f_net,
    g_net,
    init_parameters,
    load_checkpoint,
    mlp_eval,
    mlp_forward,
    rho_net,
    save_checkpoint,
)
from apnn.quadrature import gauss_legendre, velocity_average


def _zero(spec, last_bias=0.0):
    w = spec.layer_widths
    Ws = [np.zeros((w[l + 1], w[l])) for l in range(spec.n_layers)]
    bs = [np.zeros(w[l + 1]) for l in range(spec.n_layers)]
    bs[-1][:] = last_bias
    return ParameterSet(Ws, bs)


def test_init_is_deterministic():
    spec = NetworkSpec((2, 4, 1))
    a, b = init_parameters(spec, 0), init_parameters(spec, 0)
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), init_parameters(spec, 1).flat())


def test_init_biases_and_bounds():
    spec = NetworkSpec((3, 256, 1))
    p = init_parameters(spec, 3)
    assert all(np.all(b == 0) for b in p.biases)
    for l, W in enumerate(p.weights):
        bound = np.sqrt(6 / (spec.layer_widths[l] + spec.layer_widths[l + 1]))
        assert np.abs(W).max() <= bound
        assert np.abs(W).max() > 0.9 * bound


@pytest.mark.parametrize("widths", [(2, 1), (3, 5, 1), (2, 64, 64, 64, 1), (3, 7, 3, 9, 1)])
def test_parameter_count_and_flat_roundtrip(widths):
    spec = NetworkSpec(widths)
    p = init_parameters(spec, 5)
    expect = sum(widths[l + 1] * (widths[l] + 1) for l in range(len(widths) - 1))
    assert spec.n_params == p.n_params == expect
    q = ParameterSet.from_flat(spec, p.flat())
    np.testing.assert_array_equal(q.flat(), p.flat())


@pytest.mark.parametrize("widths", [(2,), (2, 0, 1), (2, 3, 2)])
def test_invalid_specs(widths):
    with pytest.raises(ConfigurationError):
        NetworkSpec(widths)


def test_zero_network_output():
    spec = NetworkSpec((2, 5, 5, 1))
    assert mlp_forward(_zero(spec), spec, [0.3, 0.2]) == 0.0


def test_affine_single_layer():
    spec = NetworkSpec((2, 1))
    p = ParameterSet([np.array([[1.0, 1.0]])], [np.zeros(1)])
    assert mlp_forward(p, spec, [2.0, 3.0]) == 5.0


def test_matches_hand_rolled_evaluation():
    spec = NetworkSpec((2, 8, 1))
    p = init_parameters(spec, 7)
    x = np.array([0.25, -0.6])
    hidden = [np.tanh(sum(p.weights[0][i, j] * x[j] for j in range(2)) + p.biases[0][i]) for i in range(8)]
    out = sum(p.weights[1][0, i] * hidden[i] for i in range(8)) + p.biases[1][0]
    assert mlp_forward(p, spec, x) == pytest.approx(out, rel=1e-14)


def test_forward_dimension_mismatch():
    spec = NetworkSpec((3, 4, 1))
    with pytest.raises(ConfigurationError):
        mlp_forward(init_parameters(spec, 0), spec, [0.1, 0.2])


def test_batch_forward_agrees_with_fused():
    spec = NetworkSpec((3, 16, 16, 1))
    p = init_parameters(spec, 8)
    X = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    np.testing.assert_allclose(mlp_eval(p, spec, X), mlp_forward(p, spec, X), rtol=1e-13, atol=1e-15)


def test_exponential_heads():
    s3, s2 = NetworkSpec((3, 4, 1)), NetworkSpec((2, 4, 1))
    assert f_net(_zero(s3), s3, 0.1, 0.2, 0.3) == 1.0
    assert rho_net(_zero(s2), s2, 0.1, 0.2) == 1.0
    assert f_net(_zero(s3, 1.0), s3, 0.1, 0.2, 0.3) == pytest.approx(0.3678794412, abs=1e-10)
    assert rho_net(_zero(s2, 1.0), s2, 0.1, 0.2) == pytest.approx(0.3678794412, abs=1e-10)


def test_positivity_sweep():
    rng = np.random.default_rng(4)
    s3, s2 = NetworkSpec((3, 32, 32, 1)), NetworkSpec((2, 32, 32, 1))
    t, x, v = rng.uniform(0, 1, 10000), rng.uniform(0, 1, 10000), rng.uniform(-1, 1, 10000)
    assert f_net(init_parameters(s3, 1), s3, t, x, v).min() > 0
    assert rho_net(init_parameters(s2, 2), s2, t, x).min() > 0


def test_g_net_v_independent_is_zero():
    spec = NetworkSpec((3, 6, 1))
    p = init_parameters(spec, 3)
    p.weights[0][:, 2] = 0.0
    rule = gauss_legendre(30)
    g = g_net(p, spec, [0.2, 0.4], [0.5, 0.1], np.array([[-0.3], [0.8]]), rule)
    np.testing.assert_allclose(g, 0.0, atol=1e-15)


def test_g_net_odd_function_kept():
    spec = NetworkSpec((3, 1))
    p = ParameterSet([np.array([[0.0, 0.0, 1.0]])], [np.zeros(1)])
    rule = gauss_legendre(30)
    v = np.array([-0.7, 0.1, 0.9])
    np.testing.assert_allclose(g_net(p, spec, 0.3, 0.4, v, rule), v, atol=1e-15)


@pytest.mark.parametrize("widths", [(3, 8, 1), (3, 64, 64, 64, 1), (3, 256, 256, 256, 256, 1)])
def test_g_net_average_vanishes(widths):
    spec = NetworkSpec(widths)
    p = init_parameters(spec, 6)
    rule = gauss_legendre(30)
    rng = np.random.default_rng(9)
    t, x = rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)
    g = g_net(p, spec, t, x, rule.nodes[None, :], rule)
    assert np.abs(velocity_average(g, rule)).max() <= 1e-14


def test_checkpoint_roundtrip(tmp_path):
    spec = NetworkSpec((3, 5, 4, 1))
    p = init_parameters(spec, 12)
    path = tmp_path / "net.bin"
    sidecar = save_checkpoint(path, p, spec, seed=12, extra={"network": "g"})
    assert path.stat().st_size == 8 * spec.n_params
    q, spec2, meta = load_checkpoint(path)
    assert spec2 == spec and meta["seed"] == 12 and meta["layout_version"] == 1
    np.testing.assert_array_equal(q.flat(), p.flat())
    assert sidecar.name == "net.bin.json"
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    np.testing.assert_array_equal(raw, p.flat())
