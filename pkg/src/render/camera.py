from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from src.utils.errors import ConfigurationError

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def fibonacci_sphere(n: int, phase: float = 0.0) -> np.ndarray:
    """n near-uniform unit vectors on a spiral; `phase` rotates the spiral about z"""
    i = np.arange(n, dtype=np.float64) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = GOLDEN_ANGLE * np.arange(n) + phase
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world 3x4 pose, OpenCV axes (x right, y down, z forward)"""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ConfigurationError("look_at: up vector is parallel to the viewing direction")
    right /= norm
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward, eye])


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: np.ndarray = field(default_factory=lambda: np.hstack([np.eye(3), np.zeros((3, 1))]))

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(3, 4)
        rotation = self.pose[:, :3]
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-6):
            raise ConfigurationError("Camera rotation is not orthonormal")

    @property
    def center(self) -> np.ndarray:
        return self.pose[:, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:, :3]

    def generate_rays(self, u, v, jitter=(0.0, 0.0)) -> Tuple[np.ndarray, np.ndarray]:
        """World rays through pixel (u + du, v + dv); returns origins and unit directions"""
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        v = np.atleast_1d(np.asarray(v, dtype=np.float64))
        jitter = np.asarray(jitter, dtype=np.float64)
        du, dv = (jitter[..., 0], jitter[..., 1])
        cam = np.stack([(u + du - self.cx) / self.fx,
                        (v + dv - self.cy) / self.fy,
                        np.ones_like(u + du)], axis=-1)
        dirs = cam @ self.rotation.T
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        origins = np.broadcast_to(self.center, dirs.shape).copy()
        return origins, dirs

    def pixel_rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Rays through every pixel centre in row-major order"""
        v, u = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing='ij')
        return self.generate_rays(u.ravel(), v.ravel(), (0.5, 0.5))

    def to_manifest(self) -> dict:
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
                'width': self.width, 'height': self.height}
