import logging
import threading
from dataclasses import dataclass
from typing import List, MutableMapping, Optional, Tuple

import numpy as np

from src.nn.core import ParameterStore, get_dtype
from src.utils.errors import ConfigurationError, ContractViolation

PRIMES = (np.uint64(1), np.uint64(2654435761), np.uint64(805459861))

# corner i of a cell sits at offset (i & 1, i >> 1 & 1, i >> 2 & 1)
CORNER_OFFSETS = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.int64)


def level_resolutions(n_min: int, n_max: int, n_levels: int) -> List[int]:
    """Geometric resolution ladder N_l = floor(N_min * b^l), last level pinned to N_max"""
    if n_min < 2 or n_max < n_min or n_levels < 1:
        raise ConfigurationError(
            f"Invalid resolution range: n_min={n_min}, n_max={n_max}, levels={n_levels}")
    if n_levels == 1:
        if n_max != n_min:
            raise ConfigurationError("A single level needs n_min == n_max")
        return [int(n_min)]
    growth = (n_max / n_min) ** (1.0 / (n_levels - 1))
    resolutions = [int(np.floor(n_min * growth ** level)) for level in range(n_levels)]
    resolutions[0] = int(n_min)
    resolutions[-1] = int(n_max)
    if any(b <= a for a, b in zip(resolutions[:-1], resolutions[1:])):
        raise ConfigurationError(f"Resolutions are not strictly increasing: {resolutions}")
    return resolutions


@dataclass(frozen=True)
class GridLevelSpec:
    level: int
    resolution: int
    feature_dim: int
    table_size: int

    @property
    def dense(self) -> bool:
        return (self.resolution + 1) ** 3 <= self.table_size

    @property
    def rows(self) -> int:
        return (self.resolution + 1) ** 3 if self.dense else self.table_size


def _table_index(spec: GridLevelSpec, v: np.ndarray) -> np.ndarray:
    if spec.dense:
        side = spec.resolution + 1
        return v[..., 0] + side * (v[..., 1] + side * v[..., 2])
    u = v.astype(np.uint64)
    hashed = (u[..., 0] * PRIMES[0]) ^ (u[..., 1] * PRIMES[1]) ^ (u[..., 2] * PRIMES[2])
    return (hashed % np.uint64(spec.table_size)).astype(np.int64)


def vertex_index(spec: GridLevelSpec, v) -> np.ndarray:
    """Table row of integer vertex coordinates (..., 3) on one level"""
    v = np.asarray(v, dtype=np.int64)
    if np.any(v < 0) or np.any(v > spec.resolution):
        raise ContractViolation(
            f"Vertex outside level {spec.level} lattice [0, {spec.resolution}]")
    return _table_index(spec, v)


@dataclass
class HashGridCache:
    corners: List[Tuple[np.ndarray, np.ndarray]]
    active_levels: int


class MultiResHashGrid:
    """Multi-resolution feature grid over the cube [-1, 1]^3"""

    def __init__(self,
                 store: ParameterStore,
                 name: str,
                 n_levels: int,
                 n_min: int,
                 n_max: int,
                 feature_dim: int,
                 log2_table_size: int,
                 rng: Optional[np.random.Generator] = None,
                 init_scale: float = 1e-4):
        self.logger = logging.getLogger('hash_grid')
        self.store = store
        self.name = name
        self.feature_dim = feature_dim
        self.table_size = 2 ** log2_table_size
        self.levels = [
            GridLevelSpec(level, resolution, feature_dim, self.table_size)
            for level, resolution in enumerate(level_resolutions(n_min, n_max, n_levels))
        ]
        self.table_names = [f"{name}.level{spec.level:02d}" for spec in self.levels]

        rng = rng if rng is not None else np.random.default_rng(0)
        for spec, table_name in zip(self.levels, self.table_names):
            store.add(table_name, rng.uniform(-init_scale, init_scale, (spec.rows, feature_dim)))

        self.clamped_points = 0
        self._lock = threading.Lock()
        self.logger.debug(
            f"{name}: resolutions {[s.resolution for s in self.levels]}, "
            f"dense levels {sum(s.dense for s in self.levels)}/{n_levels}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def output_dim(self) -> int:
        return self.n_levels * self.feature_dim

    def resolution(self, level: int) -> int:
        return self.levels[level].resolution

    def _clamp(self, x: np.ndarray) -> np.ndarray:
        outside = np.any((x < -1.0) | (x > 1.0), axis=1)
        count = int(outside.sum())
        if count:
            with self._lock:
                self.clamped_points += count
            self.logger.debug(f"{self.name}: clamped {count} points to the domain cube")
            x = np.clip(x, -1.0, 1.0)
        return x

    def encode(self, x: np.ndarray, active_levels: Optional[int] = None) -> Tuple[np.ndarray, HashGridCache]:
        """Trilinearly interpolated features (n, L*F); levels >= active_levels are zero"""
        active = self.n_levels if active_levels is None else active_levels
        if not 1 <= active <= self.n_levels:
            raise ConfigurationError(f"active_levels must be in [1, {self.n_levels}], got {active}")
        x = self._clamp(np.asarray(x, dtype=get_dtype()))
        n = x.shape[0]
        F = self.feature_dim

        out = np.zeros((n, self.output_dim), dtype=x.dtype)
        corners = []
        for spec, table_name in zip(self.levels[:active], self.table_names):
            pos = (x + 1.0) * (0.5 * spec.resolution)
            base = np.clip(np.floor(pos).astype(np.int64), 0, spec.resolution - 1)
            frac = pos - base
            vertices = base[:, None, :] + CORNER_OFFSETS[None, :, :]
            idx = _table_index(spec, vertices)
            weights = np.prod(np.where(CORNER_OFFSETS[None, :, :] == 1,
                                       frac[:, None, :], 1.0 - frac[:, None, :]), axis=2)
            table = self.store.params[table_name]
            out[:, spec.level * F:(spec.level + 1) * F] = np.einsum('nc,ncf->nf', weights, table[idx])
            corners.append((idx, weights))
        return out, HashGridCache(corners, active)

    def backward(self,
                 cache: Optional[HashGridCache],
                 upstream: np.ndarray,
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> None:
        """Scatter upstream (n, L*F) into the tables of the active levels"""
        if cache is None:
            raise ContractViolation(f"{self.name}: backward called without a forward cache")
        grads = self.store.grads if grads is None else grads
        F = self.feature_dim
        for spec, (idx, weights) in zip(self.levels, cache.corners):
            block = upstream[:, spec.level * F:(spec.level + 1) * F]
            flat_idx = idx.ravel()
            grad = grads[self.table_names[spec.level]]
            for f in range(F):
                contrib = (weights * block[:, f:f + 1]).ravel()
                grad[:, f] += np.bincount(flat_idx, weights=contrib, minlength=spec.rows)
