import logging
from dataclasses import dataclass
from typing import Callable, MutableMapping, Optional, Tuple, Union

import numpy as np

from src.encoding.hash_grid import HashGridCache, MultiResHashGrid
from src.encoding.spatial_mask import MaskCache, PinnedMask, SpatialMaskField, apply_mask
from src.nn.core import DenseLayer, LayerCache, ParameterStore, component_rng, get_dtype
from src.render.camera import fibonacci_sphere
from src.utils.errors import ConfigurationError, ContractViolation

# rows: centre, then +e_k / -e_k for k = x, y, z
STENCIL = np.array([
    [0, 0, 0],
    [1, 0, 0], [-1, 0, 0],
    [0, 1, 0], [0, -1, 0],
    [0, 0, 1], [0, 0, -1],
], dtype=np.float64)


def stencil_points(x: np.ndarray, eps: float) -> np.ndarray:
    """The 7-point stencil of every row of x, stacked block-wise: (7n, 3)"""
    if eps <= 0:
        raise ConfigurationError(f"Stencil step must be positive, got {eps}")
    offsets = (eps * STENCIL).astype(x.dtype)
    return (x[None, :, :] + offsets[:, None, :]).reshape(-1, 3)


def stencil_reduce(values: np.ndarray, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient (n, 3) and discrete Laplacian (n,) from stacked stencil values"""
    v = values.reshape(7, -1)
    normal = np.stack([v[1] - v[2], v[3] - v[4], v[5] - v[6]], axis=1) / (2.0 * eps)
    lap = ((v[1] + v[2] - 2.0 * v[0])
           + (v[3] + v[4] - 2.0 * v[0])
           + (v[5] + v[6] - 2.0 * v[0])) / (eps * eps)
    return normal, lap


def numerical_gradient(field: Callable[[np.ndarray], np.ndarray], x: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of any batched scalar field at the rows of x"""
    x = np.atleast_2d(x)
    return stencil_reduce(np.asarray(field(stencil_points(x, eps))), eps)[0]


def discrete_laplacian(field: Callable[[np.ndarray], np.ndarray], x: np.ndarray, eps: float) -> np.ndarray:
    x = np.atleast_2d(x)
    return stencil_reduce(np.asarray(field(stencil_points(x, eps))), eps)[1]


def epsilon_for_level(active_levels: int, grid: MultiResHashGrid) -> float:
    """Cell size of the finest active level in the [-1, 1] domain"""
    if not 1 <= active_levels <= grid.n_levels:
        raise ConfigurationError(f"active_levels must be in [1, {grid.n_levels}], got {active_levels}")
    return 2.0 / grid.resolution(active_levels - 1)


@dataclass
class SdfCache:
    x: np.ndarray
    features: np.ndarray
    grid: HashGridCache
    mask: Optional[MaskCache]
    hidden: LayerCache
    output: LayerCache
    active_levels: int


@dataclass
class StencilCache:
    net: SdfCache
    n: int
    eps: float


@dataclass
class SdfSample:
    sdf: np.ndarray
    feature: np.ndarray
    normal: np.ndarray
    laplacian: np.ndarray


class SdfNetwork:
    """SDF MLP over [x, h(x)] with h the (optionally masked) hash encoding.

    Outputs one SDF value and a geometry feature of the hidden width per point.
    """

    def __init__(self,
                 store: ParameterStore,
                 grid: MultiResHashGrid,
                 mask: Union[SpatialMaskField, PinnedMask, None] = None,
                 hidden: int = 64,
                 beta: float = 100.0,
                 init_radius: float = 0.5,
                 init_kappa: float = 4.0,
                 seed: int = 0,
                 name: str = 'sdf'):
        self.logger = logging.getLogger('sdf_network')
        self.store = store
        self.grid = grid
        self.mask = mask
        self.name = name
        self.feature_dim = hidden

        rng = component_rng(seed, f"{name}.mlp")
        self.hidden_layer = DenseLayer(store, f"{name}.hidden", 3 + grid.output_dim, hidden,
                                       activation='softplus', beta=beta, rng=rng)
        self.output_layer = DenseLayer(store, f"{name}.output", hidden, 1 + hidden, rng=rng)
        self._geometric_init(rng, init_radius, init_kappa)

        self.active_levels = grid.n_levels
        self.eps = epsilon_for_level(self.active_levels, grid)

    def _geometric_init(self, rng: np.random.Generator, radius: float, kappa: float) -> None:
        """Start from sdf(x) ~ |x| - radius.

        Hidden unit j sees kappa * u_j . x with u_j spread over the sphere; the
        mean of relu(u . x) over directions is |x| / 4, which fixes the output row.
        """
        width = self.feature_dim
        w_hidden = np.empty((width, 3 + self.grid.output_dim))
        w_hidden[:, :3] = kappa * fibonacci_sphere(width)
        w_hidden[:, 3:] = rng.normal(0.0, np.sqrt(2.0 / width), (width, self.grid.output_dim))
        self.store.assign(self.hidden_layer.weight_name, w_hidden)
        self.store.assign(self.hidden_layer.bias_name, np.zeros(width))

        w_out = np.empty((1 + width, width))
        w_out[0] = 4.0 / (kappa * width)
        w_out[1:] = rng.normal(0.0, np.sqrt(1.0 / width), (width, width))
        b_out = np.zeros(1 + width)
        b_out[0] = -radius
        self.store.assign(self.output_layer.weight_name, w_out)
        self.store.assign(self.output_layer.bias_name, b_out)

    def set_active_levels(self, active_levels: int) -> float:
        self.eps = epsilon_for_level(active_levels, self.grid)
        self.active_levels = active_levels
        return self.eps

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, SdfCache]:
        """(n, 1 + G): column 0 is the SDF, the rest the geometry feature"""
        x = np.asarray(x, dtype=get_dtype())
        active = self.active_levels
        f, grid_cache = self.grid.encode(x, active)
        if self.mask is None:
            h, mask_cache = f, None
        else:
            s, mask_cache = self.mask.forward(x)
            h = apply_mask(s, f, active)
        hidden, hidden_cache = self.hidden_layer.forward(np.concatenate([x, h], axis=1))
        out, out_cache = self.output_layer.forward(hidden)
        return out, SdfCache(x, f, grid_cache, mask_cache, hidden_cache, out_cache, active)

    def backward(self,
                 cache: Optional[SdfCache],
                 d_out: np.ndarray,
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> None:
        if cache is None:
            raise ContractViolation(f"{self.name}: backward called without a forward cache")
        d_hidden = self.output_layer.backward(cache.output, d_out, grads)
        d_h = self.hidden_layer.backward(cache.hidden, d_hidden, grads)[:, 3:]
        if self.mask is None:
            d_f = d_h
        else:
            d_f = self.mask.mask_backward(cache.mask, d_h, cache.features, cache.active_levels, grads)
        self.grid.backward(cache.grid, d_f, grads)

    def sdf(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0][:, 0]

    def evaluate_stencil(self, x: np.ndarray, eps: Optional[float] = None) -> Tuple[SdfSample, StencilCache]:
        """SDF, feature, numerical gradient and Laplacian from one batched 7-point evaluation"""
        eps = self.eps if eps is None else eps
        x = np.asarray(x, dtype=get_dtype())
        n = x.shape[0]
        out, net_cache = self.forward(stencil_points(x, eps))
        normal, lap = stencil_reduce(out[:, 0], eps)
        sample = SdfSample(sdf=out[:n, 0], feature=out[:n, 1:], normal=normal, laplacian=lap)
        return sample, StencilCache(net_cache, n, eps)

    def stencil_backward(self,
                         cache: Optional[StencilCache],
                         d_sdf: Optional[np.ndarray] = None,
                         d_feature: Optional[np.ndarray] = None,
                         d_normal: Optional[np.ndarray] = None,
                         d_laplacian: Optional[np.ndarray] = None,
                         grads: Optional[MutableMapping[str, np.ndarray]] = None) -> None:
        if cache is None:
            raise ContractViolation(f"{self.name}: stencil backward called without a forward cache")
        n, eps = cache.n, cache.eps
        dtype = cache.net.x.dtype
        dv = np.zeros((7, n), dtype=dtype)
        if d_sdf is not None:
            dv[0] += d_sdf
        if d_laplacian is not None:
            d_lap = d_laplacian / (eps * eps)
            dv[0] -= 6.0 * d_lap
            dv[1:] += d_lap[None, :]
        if d_normal is not None:
            d_norm = d_normal / (2.0 * eps)
            for k in range(3):
                dv[1 + 2 * k] += d_norm[:, k]
                dv[2 + 2 * k] -= d_norm[:, k]

        d_out = np.zeros((7 * n, 1 + self.feature_dim), dtype=dtype)
        d_out[:, 0] = dv.reshape(-1)
        if d_feature is not None:
            d_out[:n, 1:] = d_feature
        self.backward(cache.net, d_out, grads)
