import json

import numpy as np
import pytest

from src.render.image_io import ImageUtils
from src.scene.manifest import SceneManifest
from src.scene.oracle import (AnalyticScene, build_scene, dataset_cameras, generate_dataset, render_oracle,
                              sample_box_edges, sample_primitive_surface, sample_surface, sphere_trace)
from src.scene.primitives import Box, Intersection, Sphere, Torus, Union
from src.utils.errors import ConfigurationError


def test_primitive_distances():
    sphere = build_scene('sphere')
    np.testing.assert_allclose(sphere.analytic_sdf(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])), [-0.5, 0.5])
    box = build_scene('box')
    assert box.analytic_sdf(np.array([[0.4, 0.0, 0.0]]))[0] == pytest.approx(0.1)
    assert box.analytic_sdf(np.array([[0.4, 0.4, 0.0]]))[0] == pytest.approx(np.sqrt(0.02))
    torus = build_scene('torus')
    assert torus.analytic_sdf(np.array([[0.5, 0.0, 0.0]]))[0] == pytest.approx(-0.2)


def test_union_takes_nearest_primitive():
    scene = build_scene('sphere-box')
    d = scene.analytic_sdf(np.array([[-0.25, 0.0, 0.0], [0.3, 0.0, 0.0]]))
    np.testing.assert_allclose(d, [-0.35, -0.25])


def test_intersection_takes_farthest_primitive():
    shape = Intersection([Sphere(radius=0.5), Box(half_extents=(0.3, 0.3, 0.3))])
    points = np.array([[0.0, 0.0, 0.0], [0.4, 0.0, 0.0]])
    np.testing.assert_allclose(shape.sdf(points), [-0.3, 0.1])
    np.testing.assert_allclose(shape.normal(points[1:]), [[1.0, 0.0, 0.0]])
    assert shape.bounding_radius() == pytest.approx(0.5)
    assert len(shape.primitives()) == 2


def test_scene_must_fit_in_unit_sphere():
    with pytest.raises(ConfigurationError):
        AnalyticScene(Sphere((0.6, 0.0, 0.0), 0.5))


def test_unknown_scene_name():
    with pytest.raises(ConfigurationError):
        build_scene('teapot')


def test_trace_hits_front_of_sphere():
    trace = sphere_trace(build_scene('sphere'), np.array([[0.0, 0.0, -2.0]]), np.array([[0.0, 0.0, 1.0]]))
    assert trace.hit[0]
    np.testing.assert_allclose(trace.points[0], [0.0, 0.0, -0.5], atol=1e-5)
    assert trace.t[0] == pytest.approx(1.5, abs=1e-5)


def test_trace_misses():
    scene = build_scene('sphere')
    trace = sphere_trace(scene, np.array([[0.0, 0.7, -2.0], [0.0, 3.0, 0.0]]),
                         np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]))
    assert not trace.hit.any()


def test_traced_hits_lie_on_surface_at_closed_form_depth():
    scene = build_scene('sphere')
    rng = np.random.default_rng(0)
    origins = np.tile([0.0, 0.0, -2.5], (10_000, 1))
    targets = rng.uniform(-0.6, 0.6, (10_000, 3)) * np.array([1.0, 1.0, 0.0])
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    trace = sphere_trace(scene, origins, dirs)
    assert trace.hit.sum() > 1000
    assert np.all(np.abs(scene.analytic_sdf(trace.points[trace.hit])) < 1e-5)

    # grazing rays converge in depth only as tol / cos(incidence)
    b = np.sum(origins * dirs, axis=1)
    impact = np.linalg.norm(np.cross(origins, dirs), axis=1)
    frontal = trace.hit & (impact < 0.45)
    closed_form = -b - np.sqrt(np.maximum(b * b - (np.sum(origins * origins, axis=1) - 0.25), 0.0))
    np.testing.assert_allclose(trace.t[frontal], closed_form[frontal], atol=1e-4)


def test_normals_are_unit():
    scene = build_scene('sphere-box')
    points = sample_surface(scene, 500, seed=1)
    np.testing.assert_allclose(np.linalg.norm(scene.normal(points), axis=1), 1.0, atol=1e-9)


def test_oracle_image_shows_background_on_misses():
    scene = build_scene('sphere')
    camera = dataset_cameras(3, 24, seed=0)[0]
    image, hit = render_oracle(scene, camera)
    assert image.shape == (24, 24, 3)
    assert 0 < hit.sum() < hit.size
    np.testing.assert_array_equal(image[~hit], 1.0)
    assert np.all(image[hit] >= scene.ambient - 1e-12)


def test_cameras_look_at_origin_from_fixed_radius():
    cameras = dataset_cameras(48, 32, seed=3)
    for camera in cameras:
        assert np.linalg.norm(camera.center) == pytest.approx(2.5)
        forward = camera.rotation[:, 2]
        np.testing.assert_allclose(forward, -camera.center / 2.5, atol=1e-12)


def test_dataset_layout(sphere_box_dataset):
    files = sorted(p.name for p in sphere_box_dataset.iterdir())
    assert files == ['manifest.json', 'view_000.ppm', 'view_001.ppm', 'view_002.ppm', 'view_003.ppm']
    manifest = json.loads((sphere_box_dataset / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['scene'] == 'sphere-box'
    assert manifest['background'] == [1.0, 1.0, 1.0]
    assert manifest['intrinsics'] == {'fx': 16.0, 'fy': 16.0, 'cx': 8.0, 'cy': 8.0, 'width': 16, 'height': 16}
    assert len(manifest['frames'][0]['transform']) == 12
    assert ImageUtils.read_ppm(sphere_box_dataset / 'view_000.ppm').shape == (16, 16, 3)


def test_dataset_generation_is_deterministic(sphere_box_dataset, tmp_path):
    generate_dataset(build_scene('sphere-box'), n_views=4, resolution=16, seed=0, out_dir=tmp_path)
    for name in ('manifest.json', 'view_000.ppm', 'view_003.ppm'):
        assert (tmp_path / name).read_bytes() == (sphere_box_dataset / name).read_bytes()


def test_manifest_cameras_round_trip_poses(sphere_box_dataset):
    manifest = SceneManifest.load(sphere_box_dataset)
    expected = dataset_cameras(4, 16, seed=0)
    for camera, reference in zip(manifest.cameras(), expected):
        np.testing.assert_allclose(camera.pose, reference.pose, atol=1e-12)


def test_single_view_dataset_is_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        generate_dataset(build_scene('sphere'), n_views=1, resolution=8, seed=0, out_dir=tmp_path)


def test_sphere_samples_are_on_the_surface():
    points = sample_surface(build_scene('sphere'), 2000, seed=0)
    assert points.shape == (2000, 3)
    np.testing.assert_allclose(np.linalg.norm(points, axis=1), 0.5, atol=1e-6)
    np.testing.assert_array_equal(points, sample_surface(build_scene('sphere'), 2000, seed=0))


def test_sphere_samples_cover_the_surface_evenly():
    points = sample_surface(build_scene('sphere'), 20_000, seed=2)
    octant_counts = np.bincount(((points > 0) * [1, 2, 4]).sum(axis=1), minlength=8)
    assert np.all(np.abs(octant_counts - 2500) < 5 * np.sqrt(2500))


def test_composed_samples_lie_on_primitives():
    scene = build_scene('sphere-box')
    sphere_points = sample_primitive_surface(scene, Sphere, 300, seed=0)
    assert np.all(np.abs(scene.primitives()[0].sdf(sphere_points)) < 1e-6)
    box_points = sample_primitive_surface(scene, Box, 300, seed=0)
    assert np.all(np.abs(scene.primitives()[1].sdf(box_points)) < 1e-6)


def test_box_edge_samples():
    scene = build_scene('sphere-box')
    edges = sample_box_edges(scene, 400, seed=0)
    assert edges.shape == (400, 3)
    local = np.abs(edges - [0.3, 0.0, 0.0])
    # two of the three coordinates sit on the box faces
    assert np.all((np.abs(local - 0.25) < 1e-9).sum(axis=1) >= 2)
    with pytest.raises(ConfigurationError):
        sample_box_edges(build_scene('sphere'), 10, seed=0)


def test_torus_and_union_primitive_listing():
    torus = Torus((0.0, 0.0, 0.0), 0.5, 0.2)
    union = Union([Sphere(), torus])
    assert union.primitives() == [union.children[0], torus]
