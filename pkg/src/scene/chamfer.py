from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.utils.errors import ConfigurationError

BACKENDS = ('grid', 'kdtree')
DEFAULT_THRESHOLD = 0.01


@dataclass
class ChamferResult:
    chamfer: float
    acc: float
    comp: float
    precision: float
    recall: float
    fscore: float
    threshold: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


class UniformGrid:
    """Points bucketed into cubic cells; exact nearest-neighbour queries by growing rings of cells"""

    def __init__(self, points: np.ndarray, points_per_cell: float = 2.0):
        self.points = np.asarray(points, dtype=np.float64)
        self.lo = self.points.min(axis=0)
        extent = float(np.max(self.points.max(axis=0) - self.lo))
        cells = max(1, int(np.ceil((len(self.points) / points_per_cell) ** (1.0 / 3.0))))
        self.h = max(extent / cells, 1e-12)
        self.dims = np.floor((self.points.max(axis=0) - self.lo) / self.h).astype(np.int64) + 1

        cell = self._cell_of(self.points)
        ids = self._linear(cell)
        self.order = np.argsort(ids, kind='stable')
        self.sorted_ids = ids[self.order]

    def _cell_of(self, x: np.ndarray) -> np.ndarray:
        return np.floor((x - self.lo) / self.h).astype(np.int64)

    def _linear(self, cell: np.ndarray) -> np.ndarray:
        return cell[:, 0] + self.dims[0] * (cell[:, 1] + self.dims[1] * cell[:, 2])

    @staticmethod
    def _ring_offsets(r: int) -> np.ndarray:
        if r == 0:
            return np.zeros((1, 3), dtype=np.int64)
        side = np.arange(-r, r + 1)
        grid = np.stack(np.meshgrid(side, side, side, indexing='ij'), axis=-1).reshape(-1, 3)
        return grid[np.abs(grid).max(axis=1) == r]

    def query(self, x: np.ndarray) -> np.ndarray:
        """Distance from every row of x to its nearest grid point"""
        x = np.asarray(x, dtype=np.float64)
        best = np.full(len(x), np.inf)
        # rings grow around the cell of the query's projection onto the grid box;
        # the projection never increases distances, so the ring bound below still holds
        qcell = np.clip(self._cell_of(x), 0, self.dims - 1)
        last_ring = np.maximum(qcell, (self.dims - 1) - qcell).max(axis=1)
        pending = np.arange(len(x))
        r = 0
        while len(pending):
            for offset in self._ring_offsets(r):
                cell = qcell[pending] + offset
                inside = np.all((cell >= 0) & (cell < self.dims), axis=1)
                if not inside.any():
                    continue
                queries = pending[inside]
                ids = self._linear(cell[inside])
                start = np.searchsorted(self.sorted_ids, ids, side='left')
                count = np.searchsorted(self.sorted_ids, ids, side='right') - start
                total = int(count.sum())
                if total == 0:
                    continue
                owner = np.repeat(queries, count)
                first = np.repeat(start - np.cumsum(count) + count, count)
                members = self.order[first + np.arange(total)]
                d = np.linalg.norm(x[owner] - self.points[members], axis=1)
                np.minimum.at(best, owner, d)
            # anything outside ring r is at least r*h away
            done = (best[pending] <= r * self.h) | (r >= last_ring[pending])
            pending = pending[~done]
            r += 1
        return best


def nearest_distances(queries: np.ndarray, points: np.ndarray, backend: str = 'grid') -> np.ndarray:
    if backend not in BACKENDS:
        raise ConfigurationError(f"Unknown Chamfer backend '{backend}', expected one of {BACKENDS}")
    if len(points) == 0 or len(queries) == 0:
        raise ConfigurationError("Nearest-neighbour query on an empty point cloud")
    if backend == 'kdtree':
        return cKDTree(points).query(queries, k=1)[0]
    return UniformGrid(points).query(queries)


def _one_sided(a: np.ndarray, b: np.ndarray, backend: str) -> Tuple[np.ndarray, np.ndarray]:
    return nearest_distances(a, b, backend), nearest_distances(b, a, backend)


def chamfer_l1(reconstruction: np.ndarray,
               reference: np.ndarray,
               backend: str = 'grid',
               threshold: float = DEFAULT_THRESHOLD) -> ChamferResult:
    """Symmetric Chamfer-L1 with accuracy (reconstruction to reference) and completeness components"""
    a = np.atleast_2d(np.asarray(reconstruction, dtype=np.float64))
    b = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ConfigurationError("Chamfer distance needs two nonempty point clouds")
    if a.shape[1] != 3 or b.shape[1] != 3:
        raise ConfigurationError(f"Point clouds must be (n, 3), got {a.shape} and {b.shape}")

    d_ab, d_ba = _one_sided(a, b, backend)
    acc, comp = float(d_ab.mean()), float(d_ba.mean())
    precision, recall, fscore = fscore_from_distances(d_ab, d_ba, threshold)
    return ChamferResult(chamfer=0.5 * (acc + comp), acc=acc, comp=comp,
                         precision=precision, recall=recall, fscore=fscore, threshold=threshold)


def fscore_from_distances(d_ab: np.ndarray, d_ba: np.ndarray, threshold: float) -> Tuple[float, float, float]:
    precision = float(np.mean(d_ab < threshold))
    recall = float(np.mean(d_ba < threshold))
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2.0 * precision * recall / (precision + recall)
