import logging

import numpy as np
import pytest

from src.encoding.hash_grid import GridLevelSpec, MultiResHashGrid, level_resolutions, vertex_index
from src.nn.core import ParameterStore
from src.nn.gradcheck import grad_check
from src.utils.errors import ConfigurationError, ContractViolation


def _grid(store=None, **kwargs):
    params = dict(n_levels=4, n_min=4, n_max=16, feature_dim=2, log2_table_size=8,
                  rng=np.random.default_rng(0), init_scale=1.0)
    params.update(kwargs)
    return MultiResHashGrid(store if store is not None else ParameterStore(), 'grid', **params)


def test_level_resolution_ladder():
    resolutions = level_resolutions(32, 2048, 16)
    assert resolutions[0] == 32
    assert resolutions[-1] == 2048
    assert resolutions[1] == 42
    assert all(b > a for a, b in zip(resolutions[:-1], resolutions[1:]))


def test_level_resolutions_must_increase():
    with pytest.raises(ConfigurationError):
        level_resolutions(2, 3, 8)


def test_hashed_vertex_index():
    spec = GridLevelSpec(level=0, resolution=2048, feature_dim=2, table_size=2 ** 22)
    assert not spec.dense
    expected = (1 * 1 ^ 2 * 2654435761 ^ 3 * 805459861) % 2 ** 22
    assert int(vertex_index(spec, [1, 2, 3])) == expected


def test_dense_vertex_index_is_a_bijection():
    spec = GridLevelSpec(level=0, resolution=4, feature_dim=2, table_size=2 ** 8)
    assert spec.dense
    assert spec.rows == 125
    axis = np.arange(5)
    vertices = np.stack(np.meshgrid(axis, axis, axis, indexing='ij'), axis=-1).reshape(-1, 3)
    index = vertex_index(spec, vertices)
    assert sorted(index.tolist()) == list(range(125))
    assert int(vertex_index(spec, [1, 2, 3])) == 1 + 5 * (2 + 5 * 3)


def test_vertex_outside_lattice_is_rejected():
    spec = GridLevelSpec(level=0, resolution=4, feature_dim=2, table_size=2 ** 8)
    with pytest.raises(ContractViolation):
        vertex_index(spec, [5, 0, 0])


def _reference_encoding(grid, x):
    out = np.zeros((len(x), grid.output_dim))
    for n, point in enumerate(x):
        for spec, name in zip(grid.levels, grid.table_names):
            table = grid.store.params[name]
            pos = (point + 1.0) * 0.5 * spec.resolution
            base = np.minimum(np.floor(pos).astype(int), spec.resolution - 1)
            frac = pos - base
            feature = np.zeros(spec.feature_dim)
            for dx in (0, 1):
                for dy in (0, 1):
                    for dz in (0, 1):
                        w = ((frac[0] if dx else 1 - frac[0]) * (frac[1] if dy else 1 - frac[1])
                             * (frac[2] if dz else 1 - frac[2]))
                        feature += w * table[vertex_index(spec, base + [dx, dy, dz])]
            out[n, spec.level * spec.feature_dim:(spec.level + 1) * spec.feature_dim] = feature
    return out


def test_encoding_matches_trilinear_reference(float64):
    grid = _grid()
    x = np.random.default_rng(1).uniform(-1, 1, (20, 3))
    x[0] = [1.0, 1.0, 1.0]
    x[1] = [-1.0, 0.0, 0.5]
    out, _ = grid.encode(x)
    np.testing.assert_allclose(out, _reference_encoding(grid, x), atol=1e-12)


def test_encoding_at_vertex_returns_table_row(float64):
    grid = _grid()
    spec = grid.levels[0]
    vertex = np.array([1, 3, 2])
    x = vertex / spec.resolution * 2.0 - 1.0
    out, _ = grid.encode(x[None, :])
    row = grid.store.params[grid.table_names[0]][vertex_index(spec, vertex)]
    np.testing.assert_allclose(out[0, :2], row, atol=1e-12)


def test_blocked_levels_are_zero(float64):
    grid = _grid()
    x = np.random.default_rng(2).uniform(-1, 1, (10, 3))
    out, cache = grid.encode(x, active_levels=2)
    assert np.all(out[:, 4:] == 0)
    assert np.any(out[:, :4] != 0)

    grads = grid.store.grad_buffer()
    grid.backward(cache, np.ones_like(out), grads)
    assert grid.table_names[2] not in grads or np.all(grads[grid.table_names[2]] == 0)
    assert grid.table_names[3] not in grads or np.all(grads[grid.table_names[3]] == 0)


def test_active_level_range_is_checked(float64):
    grid = _grid()
    with pytest.raises(ConfigurationError):
        grid.encode(np.zeros((1, 3)), active_levels=0)
    with pytest.raises(ConfigurationError):
        grid.encode(np.zeros((1, 3)), active_levels=5)


def test_points_outside_domain_are_clamped_and_counted(float64, caplog):
    grid = _grid()
    with caplog.at_level(logging.DEBUG, logger='hash_grid'):
        out, _ = grid.encode(np.array([[1.5, 0.0, 0.0], [0.2, 0.1, 0.0]]))
    assert [r.levelno for r in caplog.records if r.name == 'hash_grid'] == [logging.DEBUG]
    clamped, _ = grid.encode(np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out[0], clamped[0])
    assert grid.clamped_points == 1


def test_zero_upstream_leaves_tables_untouched(float64):
    grid = _grid()
    out, cache = grid.encode(np.random.default_rng(3).uniform(-1, 1, (8, 3)))
    grid.backward(cache, np.zeros_like(out))
    assert all(np.all(grid.store.grads[name] == 0) for name in grid.table_names)


def test_table_gradients_match_finite_differences(float64):
    store = ParameterStore()
    grid = _grid(store)
    rng = np.random.default_rng(4)
    x = rng.uniform(-0.9, 0.9, (12, 3))
    coef = rng.normal(size=(12, grid.output_dim))

    def closure(grads):
        out, cache = grid.encode(x)
        if grads is not None:
            grid.backward(cache, coef, grads)
        return float(np.sum(out * coef))

    report = grad_check(closure, store, tol=1e-6, max_entries=40)
    assert report.passed, report.errors


def test_hash_collisions_accumulate_gradients(float64):
    store = ParameterStore()
    grid = MultiResHashGrid(store, 'tiny', n_levels=1, n_min=8, n_max=8, feature_dim=1,
                            log2_table_size=2, init_scale=1.0)
    x = np.random.default_rng(5).uniform(-1, 1, (50, 3))
    out, cache = grid.encode(x)
    grid.backward(cache, np.ones_like(out))
    # every interpolation weight lands somewhere in the 4-row table
    assert store.grads['tiny.level00'].sum() == pytest.approx(50.0)


def test_encoding_is_continuous_across_cell_faces(float64):
    grid = _grid()
    for spec in grid.levels:
        face = 2.0 * 2 / spec.resolution - 1.0
        inside = np.array([[face - 1e-7, 0.13, -0.41]])
        outside = np.array([[face + 1e-7, 0.13, -0.41]])
        below, _ = grid.encode(inside)
        above, _ = grid.encode(outside)
        assert np.max(np.abs(above - below)) < 1e-5


def test_corner_weights_form_a_partition_of_unity(float64):
    grid = _grid()
    x = np.random.default_rng(6).uniform(-1, 1, (30, 3))
    x[0] = [1.0, -1.0, 1.0]
    _, cache = grid.encode(x)
    assert len(cache.corners) == grid.n_levels
    for _, weights in cache.corners:
        assert weights.shape == (30, 8)
        assert np.all(weights >= 0)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)


def test_zero_tables_encode_to_zero(float64):
    grid = _grid()
    for name in grid.table_names:
        grid.store.params[name][...] = 0.0
    out, _ = grid.encode(np.random.default_rng(7).uniform(-1, 1, (25, 3)))
    assert np.all(out == 0.0)
