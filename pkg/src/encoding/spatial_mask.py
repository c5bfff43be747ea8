import logging
from dataclasses import dataclass
from typing import MutableMapping, Optional, Tuple

import numpy as np
from scipy.special import expit, softmax

from src.encoding.hash_grid import HashGridCache, MultiResHashGrid
from src.nn.core import DenseLayer, LayerCache, ParameterStore, component_rng, get_dtype
from src.utils.errors import ConfigurationError, ContractViolation

MASK_ACTIVATIONS = ('sigmoid', 'softmax')
MASK_MODES = ('learned', 'ones', 'zeros', 'none')


def apply_mask(s: np.ndarray, f: np.ndarray, active_levels: int) -> np.ndarray:
    """h = [s_1 f_1, ..., s_L f_L] with blocks at or beyond active_levels zeroed"""
    n, levels = s.shape
    if f.shape[0] != n or f.shape[1] % levels:
        raise ConfigurationError(f"Mask of shape {s.shape} does not fit features of shape {f.shape}")
    F = f.shape[1] // levels
    h = np.repeat(s, F, axis=1) * f
    h[:, active_levels * F:] = 0
    return h


def apply_mask_backward(s: np.ndarray,
                        f: np.ndarray,
                        upstream_h: np.ndarray,
                        active_levels: int) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (dL/ds, dL/df); both are exactly zero on inactive levels"""
    n, levels = s.shape
    F = f.shape[1] // levels
    d_s = (upstream_h * f).reshape(n, levels, F).sum(axis=2)
    d_s[:, active_levels:] = 0
    d_f = np.repeat(s, F, axis=1) * upstream_h
    d_f[:, active_levels * F:] = 0
    return d_s, d_f


@dataclass
class MaskCache:
    grid: Optional[HashGridCache]
    hidden: Optional[LayerCache]
    output: Optional[LayerCache]
    s: np.ndarray


class SpatialMaskField:
    """Per-level mask s(x) from a small hash grid and a one-hidden-layer MLP"""

    def __init__(self,
                 store: ParameterStore,
                 name: str,
                 out_levels: int,
                 mask_levels: int = 8,
                 d_min: int = 5,
                 d_max: int = 11,
                 feature_dim: int = 4,
                 log2_table_size: int = 18,
                 hidden: int = 16,
                 activation: str = 'sigmoid',
                 beta: float = 100.0,
                 output_bias: float = 1.0,
                 seed: int = 0):
        if activation not in MASK_ACTIVATIONS:
            raise ConfigurationError(f"Unknown mask activation '{activation}'")
        if d_min > d_max:
            raise ConfigurationError(f"mask d_min ({d_min}) exceeds d_max ({d_max})")
        self.logger = logging.getLogger('spatial_mask')
        self.store = store
        self.name = name
        self.out_levels = out_levels
        self.activation = activation

        self.grid = MultiResHashGrid(store, f"{name}.grid", mask_levels, 2 ** d_min, 2 ** d_max,
                                     feature_dim, log2_table_size,
                                     rng=component_rng(seed, f"{name}.grid"))
        mlp_rng = component_rng(seed, f"{name}.mlp")
        self.hidden = DenseLayer(store, f"{name}.hidden", self.grid.output_dim, hidden,
                                 activation='softplus', beta=beta, rng=mlp_rng)
        self.output = DenseLayer(store, f"{name}.output", hidden, out_levels, rng=mlp_rng)
        store.params[self.output.bias_name][:] = output_bias

    @property
    def output_row_names(self) -> Tuple[str, str]:
        return self.output.weight_name, self.output.bias_name

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, MaskCache]:
        enc, grid_cache = self.grid.encode(x)
        hidden, hidden_cache = self.hidden.forward(enc)
        logits, out_cache = self.output.forward(hidden)
        s = expit(logits) if self.activation == 'sigmoid' else softmax(logits, axis=1)
        return s, MaskCache(grid_cache, hidden_cache, out_cache, s)

    def backward(self,
                 cache: Optional[MaskCache],
                 d_s: np.ndarray,
                 active_levels: int,
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> None:
        """Backpropagate dL/ds; logits of inactive levels receive exactly zero gradient"""
        if cache is None:
            raise ContractViolation(f"{self.name}: backward called without a forward cache")
        s = cache.s
        d_s = d_s.copy()
        d_s[:, active_levels:] = 0
        if self.activation == 'sigmoid':
            d_logits = d_s * s * (1 - s)
        else:
            d_logits = s * (d_s - np.sum(s * d_s, axis=1, keepdims=True))
        # softmax couples every logit to every level
        d_logits[:, active_levels:] = 0
        d_hidden = self.output.backward(cache.output, d_logits, grads)
        d_enc = self.hidden.backward(cache.hidden, d_hidden, grads)
        self.grid.backward(cache.grid, d_enc, grads)

    def mask_backward(self,
                      cache: Optional[MaskCache],
                      upstream_h: np.ndarray,
                      f: np.ndarray,
                      active_levels: int,
                      grads: Optional[MutableMapping[str, np.ndarray]] = None) -> np.ndarray:
        """Gradient through h = s * f: updates the mask field and returns dL/df"""
        if cache is None:
            raise ContractViolation(f"{self.name}: backward called without a forward cache")
        d_s, d_f = apply_mask_backward(cache.s, f, upstream_h, active_levels)
        self.backward(cache, d_s, active_levels, grads)
        return d_f


class PinnedMask:
    """Constant mask used for diagnostics; holds no parameters"""

    def __init__(self, out_levels: int, value: float):
        self.out_levels = out_levels
        self.value = value

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, MaskCache]:
        s = np.full((x.shape[0], self.out_levels), self.value, dtype=get_dtype())
        return s, MaskCache(None, None, None, s)

    def mask_backward(self, cache, upstream_h, f, active_levels, grads=None) -> np.ndarray:
        if cache is None:
            raise ContractViolation("Pinned mask backward called without a forward cache")
        return apply_mask_backward(cache.s, f, upstream_h, active_levels)[1]
