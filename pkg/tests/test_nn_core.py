import numpy as np
import pytest

from src.nn.core import DenseLayer, MLP, ParameterStore, component_rng, set_precision, softplus
from src.nn.gradcheck import grad_check
from src.nn.optim import Adam, adam_step
from src.nn.spherical_harmonics import sh_encode
from src.utils.errors import ConfigurationError, ContractViolation


def test_dense_forward_matches_reference(float64):
    store = ParameterStore()
    layer = DenseLayer(store, 'fc', 3, 5, activation='softplus', beta=100.0, rng=np.random.default_rng(3))
    x = np.array([[0.1, -0.2, 0.3], [0.5, 0.0, -0.4]])
    out, _ = layer.forward(x)

    w, b = store.params['fc.weight'], store.params['fc.bias']
    expected = np.empty((2, 5))
    for n in range(2):
        for j in range(5):
            z = sum(w[j, k] * x[n, k] for k in range(3)) + b[j]
            expected[n, j] = np.log1p(np.exp(100.0 * z)) / 100.0
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-14)


def test_dense_rejects_wrong_width(float64):
    layer = DenseLayer(ParameterStore(), 'fc', 3, 2)
    with pytest.raises(ConfigurationError):
        layer.forward(np.zeros((4, 2)))


def test_dense_zero_upstream_gives_zero_gradients(float64):
    store = ParameterStore()
    layer = DenseLayer(store, 'fc', 4, 3, activation='softplus')
    x = np.random.default_rng(0).normal(size=(6, 4))
    _, cache = layer.forward(x)
    dx = layer.backward(cache, np.zeros((6, 3)))
    assert np.all(dx == 0)
    assert np.all(store.grads['fc.weight'] == 0)
    assert np.all(store.grads['fc.bias'] == 0)


def test_backward_without_cache_is_a_contract_violation(float64):
    layer = DenseLayer(ParameterStore(), 'fc', 2, 2)
    with pytest.raises(ContractViolation):
        layer.backward(None, np.zeros((1, 2)))


@pytest.mark.parametrize('activation', ['softplus', 'sigmoid', 'none'])
def test_dense_gradients_match_finite_differences(float64, activation):
    store = ParameterStore()
    layer = DenseLayer(store, 'fc', 4, 3, activation=activation, beta=10.0, rng=np.random.default_rng(1))
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 4))
    coef = rng.normal(size=(5, 3))

    def closure(grads):
        out, cache = layer.forward(x)
        if grads is not None:
            layer.backward(cache, coef, grads)
        return float(np.sum(out * coef))

    report = grad_check(closure, store, tol=1e-6)
    assert report.passed, report.errors


def test_grad_check_on_linear_model_is_tight(float64):
    store = ParameterStore()
    layer = DenseLayer(store, 'lin', 3, 2, rng=np.random.default_rng(4))
    x = np.random.default_rng(5).normal(size=(7, 3))

    def closure(grads):
        out, cache = layer.forward(x)
        if grads is not None:
            layer.backward(cache, np.ones_like(out), grads)
        return float(out.sum())

    assert grad_check(closure, store).max_rel_error < 1e-9


def test_grad_check_refuses_32_bit_models():
    set_precision('float32')
    store = ParameterStore()
    DenseLayer(store, 'fc', 2, 2)
    with pytest.raises(ContractViolation):
        grad_check(lambda grads: 0.0, store)


def test_mlp_names_layers_in_order(float64):
    store = ParameterStore()
    MLP(store, 'rgb', [5, 8, 8, 3], hidden_activation='relu', output_activation='sigmoid')
    assert store.names() == ['rgb.layer0.weight', 'rgb.layer0.bias', 'rgb.layer1.weight',
                             'rgb.layer1.bias', 'rgb.layer2.weight', 'rgb.layer2.bias']


def test_softplus_is_stable_for_large_inputs():
    assert softplus(np.array([100.0]), beta=100.0)[0] == pytest.approx(100.0)
    assert softplus(np.array([-100.0]), beta=100.0)[0] == pytest.approx(0.0, abs=1e-300)


def test_component_rng_streams_are_independent_of_each_other():
    a = component_rng(0, 'sdf.grid').random(4)
    b = component_rng(0, 'mask.grid').random(4)
    again = component_rng(0, 'sdf.grid').random(4)
    assert np.array_equal(a, again)
    assert not np.array_equal(a, b)


def test_sh_band_zero_constant():
    dirs = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_allclose(sh_encode(dirs)[:, 0], 0.2820948, atol=1e-7)


def test_sh_basis_is_orthonormal_over_the_sphere():
    dirs = np.random.default_rng(1).normal(size=(1_000_000, 3))
    basis = sh_encode(dirs)
    gram = 4.0 * np.pi * (basis.T @ basis) / len(dirs)
    np.testing.assert_allclose(gram, np.eye(16), atol=1e-2)


def test_sh_band_count_is_configurable():
    assert sh_encode(np.array([[0.0, 0.0, 1.0]]), bands=3).shape == (1, 9)
    with pytest.raises(ConfigurationError):
        sh_encode(np.array([[0.0, 0.0, 1.0]]), bands=5)


def _scalar_store(w0: float) -> ParameterStore:
    store = ParameterStore()
    store.add('w', np.array([w0]))
    return store


def test_adam_three_steps_on_quadratic(float64):
    store = _scalar_store(1.0)
    lr, b1, b2, eps = 0.1, 0.9, 0.99, 1e-15

    w, m, v = 1.0, 0.0, 0.0
    for t in range(1, 4):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)

        store.grads['w'][:] = 2.0 * store.params['w']
        adam_step(store, lr, b1, b2, eps)
    assert abs(store.params['w'][0] - w) < 1e-12


def test_adam_zero_gradient_leaves_parameters(float64):
    store = _scalar_store(0.7)
    Adam(store, lr=0.5).step()
    assert store.params['w'][0] == 0.7


def test_adam_skips_frozen_and_non_finite_arrays(float64):
    store = ParameterStore()
    store.add('mask.a', np.ones(2))
    store.add('bad', np.ones(2))
    store.add('good', np.ones(2))
    store.freeze('mask.')
    for name in store.names():
        store.grads[name][:] = 1.0
    store.grads['bad'][0] = np.nan

    skipped = adam_step(store, lr=0.1)
    assert skipped == ['bad']
    assert store.nonfinite_skips == 1
    assert np.all(store.params['mask.a'] == 1.0)
    assert np.all(store.params['bad'] == 1.0)
    assert np.all(store.m['bad'] == 0.0)
    assert np.all(store.params['good'] < 1.0)


def test_merge_grads_adds_buffers_in_order(float64):
    store = ParameterStore()
    store.add('p', np.zeros(3))
    first, second = store.grad_buffer(), store.grad_buffer()
    first['p'] += 1.0
    second['p'] += 2.0
    store.merge_grads([first, second])
    assert np.all(store.grads['p'] == 3.0)


def test_duplicate_parameter_names_are_rejected(float64):
    store = ParameterStore()
    store.add('p', np.zeros(1))
    with pytest.raises(ConfigurationError):
        store.add('p', np.zeros(1))
