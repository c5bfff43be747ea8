import numpy as np
import pytest

from src.evaluation import evaluate_reconstruction, extract_mesh, load_trained_model, mask_band_report
from src.field.neural_surface import build_model
from src.mesh.marching_cubes import marching_cubes
from src.render.camera import CameraModel, look_at
from src.render.mask_maps import band_levels, band_max, named_bands, parse_band, parse_bands, render_mask_map
from src.scene.oracle import build_scene
from src.training.dataset import SceneDataset
from src.training.trainer import Trainer
from src.utils.errors import ConfigurationError
from tests.conftest import tiny_config


def _camera(resolution=8):
    return CameraModel(float(resolution), float(resolution), resolution / 2, resolution / 2,
                       resolution, resolution, look_at((0.0, -2.5, 0.0)))


def test_band_layout():
    assert band_levels(16) == {'low': (0, 8), 'mid': (8, 14), 'high': (14, 16)}
    assert band_levels(8) == {'low': (0, 4), 'mid': (4, 6), 'high': (6, 8)}


def test_band_parsing():
    assert parse_band('9-14', 16) == ('9-14', (8, 14))
    assert parse_band('3', 16) == ('3', (2, 3))
    assert [band for _, band in parse_bands(['low', 'high'], 16)] == [(0, 8), (14, 16)]
    for text in ('0-3', '5-17', 'fine', '7-2'):
        with pytest.raises(ConfigurationError):
            parse_band(text, 16)
    with pytest.raises(ConfigurationError):
        parse_band('mid', 2)


def test_named_bands_skip_empty_ones():
    assert named_bands(16) == [('low', (0, 8)), ('mid', (8, 14)), ('high', (14, 16))]
    assert named_bands(4) == [('low', (0, 2)), ('high', (2, 4))]


def test_band_max():
    mask = np.array([[0.1, 0.9, 0.3, 0.2], [0.5, 0.4, 0.8, 0.7]])
    np.testing.assert_allclose(band_max(mask, (1, 3)), [0.9, 0.8])


def test_analytic_sphere_mesh_is_within_a_cell():
    scene = build_scene('sphere')
    mesh = marching_cubes(scene.analytic_sdf, 64)
    report = evaluate_reconstruction(mesh, scene, 5000, seed=0)
    assert report['chamfer'] < 2.0 / 63
    assert report['scene'] == 'sphere'
    assert report['n_faces'] == len(mesh.faces)
    assert report['n_points'] == 5000


def test_report_is_reproducible():
    scene = build_scene('sphere-box')
    mesh = marching_cubes(scene.analytic_sdf, 32)
    first = evaluate_reconstruction(mesh, scene, 1000, seed=3)
    second = evaluate_reconstruction(mesh, scene, 1000, seed=3)
    assert first == second
    assert evaluate_reconstruction(mesh, scene, 1000, seed=3, backend='kdtree')['chamfer'] == pytest.approx(
        first['chamfer'], abs=1e-12)


def test_untrained_model_extracts_a_sphere(float64):
    model = build_model(tiny_config(sdf_hidden=64))
    mesh = extract_mesh(model, 32)
    assert model.active_levels == model.grid.n_levels
    radii = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(np.abs(radii - 0.5) < 0.05)


def test_model_report_adds_curvature_and_mask_bands(float64):
    model = build_model(tiny_config(sdf_hidden=64))
    scene = build_scene('sphere-box')
    mesh = extract_mesh(model, 24)
    report = evaluate_reconstruction(mesh, scene, 500, seed=0, model=model, mask_report=True)
    assert report['mean_abs_laplacian'] > 0
    # four levels leave the mid band empty
    assert set(report['mask_bands']) == {'low', 'high'}
    for values in report['mask_bands'].values():
        assert 0 < values['edges'] < 1
        assert 0 < values['sphere'] < 1


def test_mask_report_needs_a_box(float64):
    model = build_model(tiny_config())
    with pytest.raises(ConfigurationError):
        mask_band_report(model, build_scene('sphere'), seed=0, n_points=10)


def test_unit_mask_map_is_the_opacity_image(float64):
    model = build_model(tiny_config(mask_mode='ones', sdf_hidden=32))
    model.set_active_levels(model.grid.n_levels)
    camera = _camera()
    heat = render_mask_map(model, camera, (0, model.grid.n_levels), chunk=20)

    origins, dirs = camera.pixel_rays()
    out, _ = model.renderer.render(model, origins, dirs)
    np.testing.assert_allclose(heat.reshape(-1), 1.0 - out.residual, atol=1e-9)
    assert heat.max() > 0.5


def test_zero_mask_map_is_blank(float64):
    model = build_model(tiny_config(mask_mode='zeros'))
    heat = render_mask_map(model, _camera(), (0, 2))
    assert np.all(heat == 0)


def test_trained_model_reloads(float64, sphere_dataset, tmp_path):
    cfg = tiny_config(steps=3)
    trainer = Trainer(build_model(cfg), SceneDataset(sphere_dataset), cfg)
    trainer.train(checkpoint_dir=tmp_path, progress=False)
    path = tmp_path / 'step_0000003.ckpt'

    loaded_cfg, model, ckpt = load_trained_model(path)
    assert ckpt.step == 3
    assert loaded_cfg.steps == 3
    assert model.active_levels == 3
    for name, param in trainer.model.store.params.items():
        np.testing.assert_allclose(model.store.params[name], param, atol=1e-6)
