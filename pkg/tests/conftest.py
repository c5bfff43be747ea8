import pytest

from src.nn.core import set_precision
from src.scene.oracle import build_scene, generate_dataset
from src.training.config import TrainConfig


def tiny_config(**overrides) -> TrainConfig:
    """A few hundred parameters: 4 SDF levels (4, 6, 10, 16), dense and hashed levels mixed"""
    values = dict(
        n_levels=4, n_min=4, n_max=16, feature_dim=2, log2_table_size=8,
        mask_levels=2, mask_d_min=2, mask_d_max=3, mask_feature_dim=2, mask_log2_table_size=6,
        mask_hidden=4, sdf_hidden=8, rgb_hidden=8, rgb_layers=2,
        rays_per_step=16, n_samples=8, chunk_rays=8,
        steps=10, initial_levels=2, unveil_interval=2, lr_warmup=2, curvature_warmup=2,
        precision='float64', seed=0,
    )
    values.update(overrides)
    return TrainConfig(**values).validate()


@pytest.fixture
def float64():
    set_precision('float64')
    yield
    set_precision('float32')


@pytest.fixture
def float32():
    set_precision('float32')
    yield


@pytest.fixture(scope='session')
def sphere_dataset(tmp_path_factory):
    """Four 16x16 views of the centred sphere"""
    out = tmp_path_factory.mktemp('sphere_data')
    generate_dataset(build_scene('sphere'), n_views=4, resolution=16, seed=0, out_dir=out)
    return out


@pytest.fixture(scope='session')
def sphere_box_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp('sphere_box_data')
    generate_dataset(build_scene('sphere-box'), n_views=4, resolution=16, seed=0, out_dir=out)
    return out
