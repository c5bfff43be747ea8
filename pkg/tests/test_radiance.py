import numpy as np

from src.field.radiance import RadianceNetwork, unit_normals, unit_normals_backward
from src.nn.core import ParameterStore
from src.nn.gradcheck import grad_check


def _inputs(n=6, feature_dim=5, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.uniform(-1, 1, (n, 3)), rng.normal(size=(n, 3)),
            rng.normal(size=(n, 3)), rng.normal(size=(n, feature_dim)))


def test_zero_weights_give_grey(float64):
    store = ParameterStore()
    net = RadianceNetwork(store, feature_dim=5, hidden=8, n_hidden_layers=2)
    for name in store.names():
        store.params[name][:] = 0
    rgb, _ = net.forward(*_inputs())
    np.testing.assert_allclose(rgb, 0.5, atol=1e-12)


def test_output_is_a_color(float64):
    store = ParameterStore()
    net = RadianceNetwork(store, feature_dim=5, hidden=8, n_hidden_layers=2)
    rgb, _ = net.forward(*_inputs())
    assert rgb.shape == (6, 3)
    assert np.all((rgb > 0) & (rgb < 1))


def test_parameter_gradients(float64):
    store = ParameterStore()
    net = RadianceNetwork(store, feature_dim=5, hidden=8, n_hidden_layers=2, sh_bands=3)
    x, dirs, normals, features = _inputs()
    coef = np.random.default_rng(1).normal(size=(6, 3))

    def closure(grads):
        rgb, cache = net.forward(x, dirs, normals, features)
        if grads is not None:
            net.backward(cache, coef, grads)
        return float(np.sum(rgb * coef))

    report = grad_check(closure, store, tol=1e-5)
    assert report.passed, report.errors


def test_input_gradients_match_finite_differences(float64):
    store = ParameterStore()
    net = RadianceNetwork(store, feature_dim=5, hidden=8, n_hidden_layers=2)
    x, dirs, normals, features = _inputs(n=3)
    coef = np.random.default_rng(2).normal(size=(3, 3))

    def loss(n, f):
        return float(np.sum(net.forward(x, dirs, n, f)[0] * coef))

    _, cache = net.forward(x, dirs, normals, features)
    d_normals, d_features = net.backward(cache, coef, store.grad_buffer())

    step = 1e-6
    for i in range(3):
        for k in range(3):
            plus, minus = normals.copy(), normals.copy()
            plus[i, k] += step
            minus[i, k] -= step
            numeric = (loss(plus, features) - loss(minus, features)) / (2 * step)
            assert abs(numeric - d_normals[i, k]) < 1e-6
        for k in range(5):
            plus, minus = features.copy(), features.copy()
            plus[i, k] += step
            minus[i, k] -= step
            numeric = (loss(normals, plus) - loss(normals, minus)) / (2 * step)
            assert abs(numeric - d_features[i, k]) < 1e-6


def test_degenerate_normals_stay_finite():
    unit, norm = unit_normals(np.zeros((2, 3)))
    assert np.all(np.isfinite(unit))
    d_raw = unit_normals_backward(unit, norm, np.ones((2, 3)))
    assert np.all(np.isfinite(d_raw))
