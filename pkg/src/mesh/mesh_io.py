import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.utils.errors import ConfigurationError

MESH_FORMATS = ('obj', 'ply')

logger = logging.getLogger(__name__)


@dataclass
class TriangleMesh:
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise ConfigurationError("Mesh vertices must be finite")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ConfigurationError(
                f"Face indices must lie in [0, {len(self.vertices)}), got [{self.faces.min()}, {self.faces.max()}]")

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def euler_characteristic(self) -> int:
        """V - E + F over the vertices referenced by faces"""
        edges = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        edges = np.unique(np.sort(edges, axis=1), axis=0)
        n_vertices = len(np.unique(self.faces))
        return int(n_vertices - len(edges) + len(self.faces))


def _format_of(path: Path, fmt: Optional[str]) -> str:
    fmt = (fmt or path.suffix.lstrip('.')).lower()
    if fmt not in MESH_FORMATS:
        raise ConfigurationError(f"Unsupported mesh format '{fmt}', expected one of {MESH_FORMATS}")
    return fmt


def _obj_text(mesh: TriangleMesh) -> str:
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n" if lines else ""


def _ply_text(mesh: TriangleMesh) -> str:
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(mesh.faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines = header + [f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n"


def write_mesh(mesh: TriangleMesh, path: Union[str, Path], fmt: Optional[str] = None) -> Path:
    """Plain-text OBJ or ASCII PLY; the bytes depend only on the mesh"""
    path = Path(path)
    fmt = _format_of(path, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        text = _obj_text(mesh) if fmt == 'obj' else _ply_text(mesh)
        with open(path, 'w', encoding='ascii', newline='\n') as f:
            f.write(text)
        logger.info(f"Mesh written: {path} ({len(mesh.vertices)} vertices, {len(mesh.faces)} faces)")
        return path
    except Exception as e:
        logger.error(f"Mesh write error: {str(e)}")
        raise


def read_obj(path: Union[str, Path]) -> TriangleMesh:
    """Vertices and triangular faces of an OBJ file; other records are ignored"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Mesh not found: {path}")
    vertices, faces = [], []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == 'v':
                vertices.append([float(p) for p in parts[1:4]])
            elif parts[0] == 'f':
                indices = [int(p.split('/')[0]) - 1 for p in parts[1:]]
                # fan-triangulate polygons
                for i in range(1, len(indices) - 1):
                    faces.append([indices[0], indices[i], indices[i + 1]])
    return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))


def mesh_to_points(mesh: TriangleMesh, n_points: int, seed: int) -> np.ndarray:
    """Area-weighted uniform samples on the mesh surface"""
    if mesh.is_empty:
        raise ConfigurationError("Cannot sample points from an empty mesh")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise ConfigurationError("Cannot sample points from a mesh with zero surface area")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n_points, p=areas / total)
    r1, r2 = rng.random(n_points), rng.random(n_points)
    s = np.sqrt(r1)
    a, b, c = (mesh.vertices[mesh.faces[tri, i]] for i in range(3))
    return (1.0 - s)[:, None] * a + (s * (1.0 - r2))[:, None] * b + (s * r2)[:, None] * c
