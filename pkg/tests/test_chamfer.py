import numpy as np
import pytest

from src.scene.chamfer import UniformGrid, chamfer_l1, fscore_from_distances, nearest_distances
from src.utils.errors import ConfigurationError


def brute_force(queries, points):
    return np.min(np.linalg.norm(queries[:, None, :] - points[None, :, :], axis=2), axis=1)


def test_identical_clouds_have_zero_distance():
    points = np.random.default_rng(0).uniform(-1, 1, (300, 3))
    result = chamfer_l1(points, points)
    assert result.chamfer == 0.0
    assert result.fscore == 1.0


def test_single_points():
    p, q = np.array([[0.0, 0.0, 0.0]]), np.array([[0.3, 0.4, 0.0]])
    result = chamfer_l1(p, q)
    assert result.acc == pytest.approx(0.5)
    assert result.comp == pytest.approx(0.5)
    assert result.chamfer == pytest.approx(0.5)
    assert result.fscore == 0.0


def test_grid_matches_brute_force():
    rng = np.random.default_rng(1)
    points = rng.uniform(-1, 1, (200, 3))
    queries = rng.uniform(-1.5, 1.5, (200, 3))
    np.testing.assert_allclose(UniformGrid(points).query(queries), brute_force(queries, points), atol=1e-12)


def test_grid_handles_clustered_and_degenerate_clouds():
    rng = np.random.default_rng(2)
    clustered = np.concatenate([rng.normal(0, 0.01, (150, 3)), rng.normal(0.8, 0.01, (50, 3))])
    queries = rng.uniform(-1, 1, (100, 3))
    np.testing.assert_allclose(nearest_distances(queries, clustered), brute_force(queries, clustered), atol=1e-12)

    planar = np.column_stack([rng.uniform(-1, 1, (100, 2)), np.zeros(100)])
    np.testing.assert_allclose(nearest_distances(queries, planar), brute_force(queries, planar), atol=1e-12)
    single = np.array([[0.1, 0.2, 0.3]])
    np.testing.assert_allclose(nearest_distances(queries, single), brute_force(queries, single), atol=1e-12)


def test_backends_agree():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(-1, 1, (500, 3)), rng.uniform(-1, 1, (400, 3))
    grid, tree = chamfer_l1(a, b, backend='grid'), chamfer_l1(a, b, backend='kdtree')
    assert grid.chamfer == pytest.approx(tree.chamfer, abs=1e-12)
    assert grid.fscore == tree.fscore


def test_chamfer_is_symmetric_and_splits_into_components():
    rng = np.random.default_rng(4)
    a, b = rng.uniform(-1, 1, (100, 3)), rng.uniform(-1, 1, (80, 3))
    forward, backward = chamfer_l1(a, b), chamfer_l1(b, a)
    assert forward.chamfer == pytest.approx(backward.chamfer)
    assert forward.acc == pytest.approx(backward.comp)
    assert forward.acc == pytest.approx(brute_force(a, b).mean())


def test_fscore():
    precision, recall, fscore = fscore_from_distances(np.array([0.0, 0.02]), np.array([0.0, 0.0, 0.0, 0.5]), 0.01)
    assert precision == 0.5
    assert recall == 0.75
    assert fscore == pytest.approx(0.6)


def test_invalid_inputs():
    with pytest.raises(ConfigurationError):
        chamfer_l1(np.zeros((0, 3)), np.zeros((2, 3)))
    with pytest.raises(ConfigurationError):
        chamfer_l1(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ConfigurationError):
        nearest_distances(np.zeros((1, 3)), np.zeros((1, 3)), backend='octree')
