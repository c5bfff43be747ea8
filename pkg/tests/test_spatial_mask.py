import numpy as np
import pytest
from scipy.special import expit

from src.encoding.spatial_mask import PinnedMask, SpatialMaskField, apply_mask, apply_mask_backward
from src.nn.core import ParameterStore, softplus
from src.nn.gradcheck import grad_check
from src.utils.errors import ConfigurationError


def _mask(store, activation='sigmoid', out_levels=4, output_bias=1.0):
    return SpatialMaskField(store, 'mask', out_levels=out_levels, mask_levels=2, d_min=2, d_max=3,
                            feature_dim=2, log2_table_size=6, hidden=4, activation=activation,
                            output_bias=output_bias, seed=0)


def test_apply_mask_scales_each_level_block():
    s = np.array([[0.5, 2.0, 1.0]])
    f = np.array([[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]])
    np.testing.assert_allclose(apply_mask(s, f, 3), [[0.5, 1.0, 6.0, 8.0, 5.0, 6.0]])
    np.testing.assert_allclose(apply_mask(s, f, 2), [[0.5, 1.0, 6.0, 8.0, 0.0, 0.0]])


def test_unit_mask_is_identity_on_active_levels():
    f = np.random.default_rng(0).normal(size=(5, 8))
    np.testing.assert_array_equal(apply_mask(np.ones((5, 4)), f, 4), f)


def test_mask_shape_must_divide_features():
    with pytest.raises(ConfigurationError):
        apply_mask(np.ones((2, 3)), np.ones((2, 8)), 3)


def test_mask_backward_blocks_inactive_levels():
    rng = np.random.default_rng(1)
    s, f, up = rng.uniform(size=(4, 3)), rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    d_s, d_f = apply_mask_backward(s, f, up, active_levels=1)
    np.testing.assert_allclose(d_s[:, 0], up[:, 0] * f[:, 0] + up[:, 1] * f[:, 1])
    assert np.all(d_s[:, 1:] == 0)
    np.testing.assert_allclose(d_f[:, :2], s[:, :1] * up[:, :2])
    assert np.all(d_f[:, 2:] == 0)


def test_mask_field_matches_reference(float64):
    store = ParameterStore()
    mask = _mask(store)
    x = np.random.default_rng(2).uniform(-1, 1, (6, 3))
    s, _ = mask.forward(x)

    enc, _ = mask.grid.encode(x)
    p = store.params
    hidden = softplus(enc @ p['mask.hidden.weight'].T + p['mask.hidden.bias'], 100.0)
    expected = expit(hidden @ p['mask.output.weight'].T + p['mask.output.bias'])
    np.testing.assert_allclose(s, expected, atol=1e-12)
    assert s.shape == (6, 4)


def test_output_bias_starts_masks_open(float64):
    s, _ = _mask(ParameterStore(), output_bias=1.0).forward(np.zeros((3, 3)))
    assert np.all(s > 0.5)


def test_softmax_masks_sum_to_one(float64):
    s, _ = _mask(ParameterStore(), activation='softmax').forward(
        np.random.default_rng(3).uniform(-1, 1, (7, 3)))
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize('activation', ['sigmoid', 'softmax'])
def test_mask_gradients_match_finite_differences(float64, activation):
    store = ParameterStore()
    mask = _mask(store, activation=activation)
    rng = np.random.default_rng(4)
    x = rng.uniform(-0.9, 0.9, (8, 3))
    f = rng.normal(size=(8, 8))
    coef = rng.normal(size=(8, 8))

    def closure(grads):
        s, cache = mask.forward(x)
        h = apply_mask(s, f, 4)
        if grads is not None:
            mask.mask_backward(cache, coef, f, 4, grads)
        return float(np.sum(h * coef))

    report = grad_check(closure, store, tol=1e-4, max_entries=30)
    assert report.passed, report.errors


def test_inactive_mask_outputs_receive_no_gradient(float64):
    store = ParameterStore()
    mask = _mask(store, activation='softmax')
    rng = np.random.default_rng(5)
    x, f = rng.uniform(-1, 1, (6, 3)), rng.normal(size=(6, 8))
    _, cache = mask.forward(x)
    grads = store.grad_buffer()
    mask.mask_backward(cache, rng.normal(size=(6, 8)), f, active_levels=2, grads=grads)

    weight_name, bias_name = mask.output_row_names
    assert np.all(grads[weight_name][2:] == 0)
    assert np.all(grads[bias_name][2:] == 0)
    assert np.any(grads[weight_name][:2] != 0)


def test_pinned_mask_is_constant(float64):
    pinned = PinnedMask(out_levels=3, value=0.0)
    s, cache = pinned.forward(np.zeros((2, 3)))
    assert np.all(s == 0)
    d_f = pinned.mask_backward(cache, np.ones((2, 6)), np.ones((2, 6)), 3)
    assert np.all(d_f == 0)


def test_mask_rejects_inverted_depth_range():
    with pytest.raises(ConfigurationError):
        SpatialMaskField(ParameterStore(), 'mask', out_levels=4, d_min=6, d_max=5)
