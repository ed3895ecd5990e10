import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pinnspectral.network import FeatureNetwork, init_network, load_network


def fd_jacobian(f, X, h=1e-5):
    d = X.shape[1]
    out = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        out.append((f(X + e) - f(X - e)) / (2 * h))
    return np.stack(out, axis=-1)


def fd_laplacian(f, X, h=1e-4):
    d = X.shape[1]
    total = 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        total = total + (f(X + e) - 2 * f(X) + f(X - e)) / h**2
    return total


def test_parameter_count():
    # 1*30+30 + 30*30+30 + 30*1+1
    assert init_network([1, 30, 30, 1]).n_params == 1021
    assert init_network([2, 60, 80, 1]).n_params == 2 * 60 + 60 + 60 * 80 + 80 + 80 + 1


def test_shapes():
    net = init_network([2, 7, 5, 1], seed=1)
    X = np.random.default_rng(0).uniform(-1, 1, (11, 2))
    assert net.forward(X).shape == (11,)
    assert net.features(X).shape == (11, 6)
    assert net.feature_jacobian(X).shape == (11, 6, 2)
    assert net.feature_laplacian(X).shape == (11, 6)
    u, g, lap = net.output_derivatives(X)
    assert u.shape == (11,) and g.shape == (11, 2) and lap.shape == (11,)


def test_constant_feature():
    net = init_network([1, 4, 1], seed=0)
    X = np.linspace(-1, 1, 9)[:, None]
    vals, grads, laps = net.feature_derivatives(X)
    np.testing.assert_array_equal(vals[:, 0], 1.0)
    np.testing.assert_array_equal(grads[:, 0], 0.0)
    np.testing.assert_array_equal(laps[:, 0], 0.0)


def test_output_is_linear_in_features():
    net = init_network([2, 9, 6, 1], seed=4)
    X = np.random.default_rng(1).uniform(-1, 1, (20, 2))
    np.testing.assert_allclose(net.forward(X), net.features(X) @ net.output_weights, atol=1e-14)


def test_init_deterministic_and_seed_dependent():
    a = init_network([1, 30, 30, 1], seed=7)
    b = init_network([1, 30, 30, 1], seed=7)
    c = init_network([1, 30, 30, 1], seed=8)
    np.testing.assert_array_equal(a.get_flat_params(), b.get_flat_params())
    assert not np.array_equal(a.get_flat_params(), c.get_flat_params())
    assert all(np.all(bias == 0) for bias in a.biases)


@given(seed=st.integers(0, 10_000), dim=st.sampled_from([1, 2]),
       widths=st.lists(st.integers(2, 12), min_size=1, max_size=3))
@settings(max_examples=30, deadline=None)
def test_feature_derivatives_match_finite_differences(seed, dim, widths):
    rng = np.random.default_rng(seed)
    net = init_network([dim, *widths, 1], seed=seed)
    # random nonzero biases exercise the general case
    for b in net.biases:
        b[:] = rng.uniform(-0.5, 0.5, b.shape)
    X = rng.uniform(-1, 1, (25, dim))
    J = net.feature_jacobian(X)
    np.testing.assert_allclose(J, fd_jacobian(net.features, X), atol=1e-6, rtol=0)
    L = net.feature_laplacian(X)
    scale = max(1.0, np.abs(L).max())
    assert np.abs(L - fd_laplacian(net.features, X)).max() / scale < 1e-5


def test_second_derivatives_sum_to_laplacian():
    net = init_network([2, 8, 8, 1], seed=2)
    X = np.random.default_rng(3).uniform(-1, 1, (15, 2))
    D2 = net.feature_second_derivatives(X)
    np.testing.assert_allclose(D2.sum(axis=-1), net.feature_laplacian(X), atol=1e-13)
    h = 1e-4
    e = np.array([h, 0.0])
    fd_xx = (net.features(X + e) - 2 * net.features(X) + net.features(X - e)) / h**2
    np.testing.assert_allclose(D2[:, :, 0], fd_xx, atol=1e-5)


def test_output_derivatives_match_features():
    net = init_network([2, 6, 5, 1], seed=9)
    X = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    u, g, lap = net.output_derivatives(X)
    w = net.output_weights
    np.testing.assert_allclose(g, np.einsum("njd,j->nd", net.feature_jacobian(X), w), atol=1e-14)
    np.testing.assert_allclose(lap, net.feature_laplacian(X) @ w, atol=1e-13)


@pytest.mark.parametrize("dim", [1, 2])
def test_backprop_matches_finite_differences(dim):
    rng = np.random.default_rng(dim)
    net = init_network([dim, 5, 4, 1], seed=dim)
    for b in net.biases:
        b[:] = rng.uniform(-0.3, 0.3, b.shape)
    X = rng.uniform(-1, 1, (8, dim))
    dv, dg, dl = rng.standard_normal(8), rng.standard_normal((8, dim)), rng.standard_normal(8)

    def functional(theta):
        n = net.copy()
        n.set_flat_params(theta)
        u, g, lap = n.output_derivatives(X)
        return dv @ u + np.sum(dg * g) + dl @ lap

    theta = net.get_flat_params()
    grads = net.backprop(X, dv, dg, dl)
    flat = np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])
    h = 1e-6
    fd = np.array([(functional(theta + h * e) - functional(theta - h * e)) / (2 * h) for e in np.eye(len(theta))])
    np.testing.assert_allclose(flat, fd, rtol=1e-6, atol=1e-7)


def test_parameter_gradient_of_value():
    net = init_network([1, 4, 3, 1], seed=0)
    x = np.array([[0.3]])
    g = net.parameter_gradient(x)
    theta = net.get_flat_params()
    h = 1e-6
    fd = []
    for e in np.eye(len(theta)):
        p, m = net.copy(), net.copy()
        p.set_flat_params(theta + h * e)
        m.set_flat_params(theta - h * e)
        fd.append((p.forward(x)[0] - m.forward(x)[0]) / (2 * h))
    np.testing.assert_allclose(g, fd, atol=1e-8)


def test_flat_params_roundtrip():
    net = init_network([2, 5, 3, 1], seed=1)
    theta = np.arange(net.n_params, dtype=float)
    net.set_flat_params(theta)
    np.testing.assert_array_equal(net.get_flat_params(), theta)
    with pytest.raises(ValueError):
        net.set_flat_params(theta[:-1])


def test_save_load_bit_identical(tmp_path):
    net = init_network([2, 6, 7, 1], seed=11)
    net.set_flat_params(net.get_flat_params() + np.random.default_rng(0).normal(0, 1e-3, net.n_params))
    path = tmp_path / "net.json"
    net.save(path)
    back = load_network(path)
    X = np.random.default_rng(1).uniform(-1, 1, (30, 2))
    np.testing.assert_array_equal(net.get_flat_params(), back.get_flat_params())
    np.testing.assert_array_equal(net.feature_laplacian(X), back.feature_laplacian(X))
    assert net.digest() == back.digest()
    assert back.layer_dims == [2, 6, 7, 1] and back.seed == 11


def test_digest_changes_with_parameters():
    a = init_network([1, 3, 1], seed=0)
    b = a.copy()
    b.weights[0][0, 0] += 1e-12
    assert a.digest() != b.digest()


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValueError):
        load_network(path)


@pytest.mark.parametrize("dims", [[1, 1], [3, 4, 1], [1, 4, 2], [1, 0, 1], []])
def test_bad_dims(dims):
    with pytest.raises(ValueError):
        init_network(dims)


def test_bad_shapes():
    with pytest.raises(ValueError):
        FeatureNetwork([1, 2, 1], [np.zeros((2, 1))], [np.zeros(2)])
    with pytest.raises(ValueError):
        FeatureNetwork([1, 2, 1], [np.zeros((2, 2)), np.zeros((1, 2))], [np.zeros(2), np.zeros(1)])
    net = init_network([2, 3, 1])
    with pytest.raises(ValueError):
        net.forward(np.zeros((4, 3)))


def test_one_dimensional_input_is_accepted():
    net = init_network([1, 3, 1], seed=2)
    x = np.linspace(-1, 1, 5)
    np.testing.assert_array_equal(net.forward(x), net.forward(x[:, None]))
