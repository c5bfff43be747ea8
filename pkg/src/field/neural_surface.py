import logging
from dataclasses import dataclass
from typing import MutableMapping, Optional, Tuple

import numpy as np

from src.encoding.hash_grid import MultiResHashGrid
from src.encoding.spatial_mask import PinnedMask, SpatialMaskField
from src.field.radiance import RadianceCache, RadianceNetwork
from src.field.sdf_network import SdfNetwork, StencilCache
from src.nn.core import ParameterStore, component_rng, get_dtype, set_precision
from src.render.renderer import FieldOutput, OpacityConverter, VolumeRenderer
from src.training.config import TrainConfig
from src.utils.errors import ContractViolation
from src.utils.parallel import ordered_map


@dataclass
class SurfaceCache:
    stencil: StencilCache
    radiance: RadianceCache


class NeuralSurface:
    """Masked hash-grid SDF, radiance network and opacity sharpness in one parameter store"""

    def __init__(self, cfg: TrainConfig):
        self.logger = logging.getLogger('neural_surface')
        self.cfg = cfg
        self.store = ParameterStore()
        self.grid = MultiResHashGrid(self.store, 'sdf.grid', cfg.n_levels, cfg.n_min, cfg.n_max,
                                     cfg.feature_dim, cfg.log2_table_size,
                                     rng=component_rng(cfg.seed, 'sdf.grid'))
        self.mask = self._build_mask(cfg)
        self.sdf = SdfNetwork(self.store, self.grid, self.mask, hidden=cfg.sdf_hidden,
                              beta=cfg.softplus_beta, init_radius=cfg.init_radius, seed=cfg.seed)
        self.radiance = RadianceNetwork(self.store, self.sdf.feature_dim, hidden=cfg.rgb_hidden,
                                        n_hidden_layers=cfg.rgb_layers, sh_bands=cfg.sh_bands,
                                        seed=cfg.seed)
        self.converter = OpacityConverter(self.store, init=cfg.zeta_init)
        self.renderer = VolumeRenderer(self.converter, cfg.n_samples)
        self.set_active_levels(cfg.initial_levels)
        self.logger.info(
            f"Model built: {self.store.num_parameters()} parameters, mask mode '{cfg.mask_mode}', "
            f"resolutions {[s.resolution for s in self.grid.levels]}")

    def _build_mask(self, cfg: TrainConfig):
        if cfg.mask_mode == 'none':
            return None
        if cfg.mask_mode in ('ones', 'zeros'):
            return PinnedMask(cfg.n_levels, 1.0 if cfg.mask_mode == 'ones' else 0.0)
        mask = SpatialMaskField(self.store, 'mask', cfg.n_levels,
                                mask_levels=cfg.mask_levels, d_min=cfg.mask_d_min, d_max=cfg.mask_d_max,
                                feature_dim=cfg.mask_feature_dim,
                                log2_table_size=cfg.mask_log2_table_size,
                                hidden=cfg.mask_hidden, activation=cfg.mask_activation,
                                beta=cfg.softplus_beta, output_bias=cfg.mask_output_bias,
                                seed=cfg.seed)
        if cfg.freeze_mask:
            frozen = self.store.freeze('mask.')
            self.logger.info(f"Frozen {len(frozen)} mask arrays")
        return mask

    @property
    def active_levels(self) -> int:
        return self.sdf.active_levels

    @property
    def eps(self) -> float:
        return self.sdf.eps

    def set_active_levels(self, active_levels: int) -> float:
        return self.sdf.set_active_levels(active_levels)

    def evaluate(self, points: np.ndarray, dirs: np.ndarray) -> Tuple[FieldOutput, SurfaceCache]:
        sample, stencil_cache = self.sdf.evaluate_stencil(points)
        rgb, radiance_cache = self.radiance.forward(points, dirs, sample.normal, sample.feature)
        out = FieldOutput(sdf=sample.sdf, rgb=rgb, normal=sample.normal, laplacian=sample.laplacian)
        return out, SurfaceCache(stencil_cache, radiance_cache)

    def backward(self,
                 cache: Optional[SurfaceCache],
                 d_sdf: Optional[np.ndarray],
                 d_rgb: Optional[np.ndarray],
                 d_normal: Optional[np.ndarray],
                 d_laplacian: Optional[np.ndarray],
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> None:
        if cache is None:
            raise ContractViolation("Surface backward called without a forward cache")
        d_feature = None
        if d_rgb is not None:
            d_normal_rgb, d_feature = self.radiance.backward(cache.radiance, d_rgb, grads)
            d_normal = d_normal_rgb if d_normal is None else d_normal + d_normal_rgb
        self.sdf.stencil_backward(cache.stencil, d_sdf, d_feature, d_normal, d_laplacian, grads)

    def sdf_values(self, points: np.ndarray, chunk: int = 65536, workers: int = 1) -> np.ndarray:
        """Plain SDF evaluation (no stencil) in chunks"""
        points = np.asarray(points, dtype=get_dtype())
        starts = list(range(0, points.shape[0], chunk))
        parts = ordered_map(lambda s: self.sdf.sdf(points[s:s + chunk]), starts, workers)
        return np.concatenate(parts) if parts else np.zeros(0, dtype=get_dtype())

    def mask_values(self, points: np.ndarray) -> np.ndarray:
        """Per-level mask s(x) (n, L); the unmasked baseline reports ones"""
        points = np.asarray(points, dtype=get_dtype())
        if self.mask is None:
            return np.ones((points.shape[0], self.grid.n_levels), dtype=points.dtype)
        return self.mask.forward(points)[0]


def build_model(cfg: TrainConfig) -> NeuralSurface:
    cfg.validate()
    set_precision(cfg.precision)
    return NeuralSurface(cfg)
