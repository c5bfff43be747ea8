import logging
from typing import Callable, List, Tuple

import numpy as np

from src.mesh.mesh_io import TriangleMesh
from src.mesh.tables import CORNER_OFFSETS, EDGE_AXES, EDGE_ORIGINS, MC_TRIANGLES
from src.utils.errors import ConfigurationError
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

SLAB_PLANES = 16


def sample_grid(sdf_eval: Callable[[np.ndarray], np.ndarray],
                resolution: int,
                bounds: Tuple[float, float] = (-1.0, 1.0),
                workers: int = 1) -> np.ndarray:
    """SDF values on a resolution^3 lattice, indexed [i, j, k] along x, y, z; evaluated in x slabs"""
    axis = np.linspace(bounds[0], bounds[1], resolution)
    yy, zz = np.meshgrid(axis, axis, indexing='ij')

    def evaluate_slab(planes: Tuple[int, int]) -> np.ndarray:
        start, end = planes
        xs = np.repeat(axis[start:end], resolution * resolution)
        ys = np.tile(yy.reshape(-1), end - start)
        zs = np.tile(zz.reshape(-1), end - start)
        values = np.asarray(sdf_eval(np.stack([xs, ys, zs], axis=1)), dtype=np.float64)
        return values.reshape(end - start, resolution, resolution)

    slabs = [(s, min(s + SLAB_PLANES, resolution)) for s in range(0, resolution, SLAB_PLANES)]
    return np.concatenate(ordered_map(evaluate_slab, slabs, workers), axis=0)


def _slab_triangles(values: np.ndarray, start: int, end: int) -> np.ndarray:
    """Grid-global edge keys (t, 3) of the triangles in cubes with x index in [start, end)"""
    n = values.shape[0]
    inside = values[start:end + 1] < 0
    case = np.zeros((end - start, n - 1, n - 1), dtype=np.int64)
    for bit, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        case |= inside[ox:ox + end - start, oy:oy + n - 1, oz:oz + n - 1].astype(np.int64) << bit
    cubes = np.argwhere((case != 0) & (case != 255))
    if len(cubes) == 0:
        return np.zeros((0, 3), dtype=np.int64)

    rows = MC_TRIANGLES[case[cubes[:, 0], cubes[:, 1], cubes[:, 2]]].reshape(-1, 5, 3)
    valid = rows[:, :, 0] >= 0
    edges = rows[valid]
    owner = np.broadcast_to(cubes[:, None, :], (len(cubes), 5, 3))[valid]
    owner = owner + np.array([start, 0, 0])

    origin = owner[:, None, :] + EDGE_ORIGINS[edges]
    key = ((origin[..., 0] * n + origin[..., 1]) * n + origin[..., 2]) * 3 + EDGE_AXES[edges]
    # table triangles face the negative side; swap to face positive SDF
    return key[:, [0, 2, 1]]


def marching_cubes(sdf_eval: Callable[[np.ndarray], np.ndarray],
                   resolution: int,
                   bounds: Tuple[float, float] = (-1.0, 1.0),
                   workers: int = 1) -> TriangleMesh:
    """Zero level set of sdf_eval on a regular grid of `resolution` samples per axis over bounds^3"""
    if resolution < 2:
        raise ConfigurationError(f"Marching cubes needs at least 2 samples per axis, got {resolution}")
    values = sample_grid(sdf_eval, resolution, bounds, workers)
    return extract_surface(values, bounds, workers)


def extract_surface(values: np.ndarray,
                    bounds: Tuple[float, float] = (-1.0, 1.0),
                    workers: int = 1) -> TriangleMesh:
    """Triangulate a precomputed value lattice; vertices are welded on shared grid edges"""
    n = values.shape[0]
    if values.shape != (n, n, n):
        raise ConfigurationError(f"Value lattice must be cubic, got {values.shape}")
    slabs = [(s, min(s + SLAB_PLANES, n - 1)) for s in range(0, n - 1, SLAB_PLANES)]
    parts: List[np.ndarray] = ordered_map(lambda b: _slab_triangles(values, *b), slabs, workers)
    keys = np.concatenate(parts) if parts else np.zeros((0, 3), dtype=np.int64)
    if len(keys) == 0:
        logger.info("Marching cubes found no zero crossing")
        return TriangleMesh()

    unique, faces = np.unique(keys.reshape(-1), return_inverse=True)
    axis = unique % 3
    cell = unique // 3
    i, j, k = cell // (n * n), (cell // n) % n, cell % n
    a = np.stack([i, j, k], axis=1)
    b = a + np.eye(3, dtype=np.int64)[axis]
    va = values[a[:, 0], a[:, 1], a[:, 2]]
    vb = values[b[:, 0], b[:, 1], b[:, 2]]
    t = va / (va - vb)

    h = (bounds[1] - bounds[0]) / (n - 1)
    vertices = bounds[0] + h * (a + t[:, None] * (b - a))
    mesh = TriangleMesh(vertices, faces.reshape(-1, 3))
    logger.info(f"Marching cubes: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces at {n}^3")
    return mesh
