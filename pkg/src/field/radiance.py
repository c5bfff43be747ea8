import logging
from dataclasses import dataclass
from typing import List, MutableMapping, Optional, Tuple

import numpy as np

from src.nn.core import MLP, LayerCache, ParameterStore, component_rng, get_dtype
from src.nn.spherical_harmonics import sh_encode
from src.utils.errors import ContractViolation

NORMAL_FLOOR = 1e-12


def unit_normals(normals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize rows with a floor on the norm; returns (unit normals, clamped norms)"""
    norm = np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), NORMAL_FLOOR)
    return normals / norm, norm


def unit_normals_backward(unit: np.ndarray, norm: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    d_raw = d_unit - unit * np.sum(unit * d_unit, axis=1, keepdims=True)
    # below the floor the map is a plain scaling
    return np.where(norm > NORMAL_FLOOR, d_raw, d_unit) / norm


@dataclass
class RadianceCache:
    unit: np.ndarray
    norm: np.ndarray
    mlp: List[LayerCache]
    n_view: int


class RadianceNetwork:
    """View-dependent color from [x, SH(dir), unit normal, geometry feature]"""

    def __init__(self,
                 store: ParameterStore,
                 feature_dim: int,
                 hidden: int = 64,
                 n_hidden_layers: int = 4,
                 sh_bands: int = 4,
                 seed: int = 0,
                 name: str = 'rgb'):
        self.logger = logging.getLogger('radiance')
        self.name = name
        self.sh_bands = sh_bands
        self.feature_dim = feature_dim
        in_dim = 3 + sh_bands * sh_bands + 3 + feature_dim
        widths = [in_dim] + [hidden] * n_hidden_layers + [3]
        self.mlp = MLP(store, name, widths, hidden_activation='relu', output_activation='sigmoid',
                       rng=component_rng(seed, f"{name}.mlp"))

    def forward(self,
                x: np.ndarray,
                dirs: np.ndarray,
                normals: np.ndarray,
                features: np.ndarray) -> Tuple[np.ndarray, RadianceCache]:
        dtype = get_dtype()
        sh = sh_encode(np.asarray(dirs, dtype=dtype), self.sh_bands)
        unit, norm = unit_normals(normals)
        inputs = np.concatenate([np.asarray(x, dtype=dtype), sh, unit, features], axis=1)
        rgb, caches = self.mlp.forward(inputs)
        return rgb, RadianceCache(unit, norm, caches, 3 + sh.shape[1])

    def backward(self,
                 cache: Optional[RadianceCache],
                 d_rgb: np.ndarray,
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Returns gradients wrt the raw normals and the geometry features"""
        if cache is None:
            raise ContractViolation(f"{self.name}: backward called without a forward cache")
        d_in = self.mlp.backward(cache.mlp, d_rgb, grads)
        start = cache.n_view
        d_unit = d_in[:, start:start + 3]
        d_features = d_in[:, start + 3:]
        return unit_normals_backward(cache.unit, cache.norm, d_unit), d_features
