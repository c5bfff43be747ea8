from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np


def _vec(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


def _signs(p: np.ndarray) -> np.ndarray:
    return np.where(p >= 0, 1.0, -1.0)


@dataclass
class Sphere:
    center: Sequence[float] = (0.0, 0.0, 0.0)
    radius: float = 0.5
    albedo: Sequence[float] = (0.8, 0.3, 0.3)

    def sdf(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x - _vec(self.center), axis=-1) - self.radius

    def normal(self, x: np.ndarray) -> np.ndarray:
        p = x - _vec(self.center)
        return p / np.maximum(np.linalg.norm(p, axis=-1, keepdims=True), 1e-300)

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(_vec(self.center)) + self.radius)

    def primitives(self) -> List:
        return [self]


@dataclass
class Box:
    center: Sequence[float] = (0.0, 0.0, 0.0)
    half_extents: Sequence[float] = (0.3, 0.3, 0.3)
    albedo: Sequence[float] = (0.3, 0.5, 0.8)

    def sdf(self, x: np.ndarray) -> np.ndarray:
        q = np.abs(x - _vec(self.center)) - _vec(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def normal(self, x: np.ndarray) -> np.ndarray:
        p = x - _vec(self.center)
        q = np.abs(p) - _vec(self.half_extents)
        sign = _signs(p)
        pos = np.maximum(q, 0.0)
        pos_norm = np.linalg.norm(pos, axis=-1, keepdims=True)
        outer = sign * pos / np.maximum(pos_norm, 1e-300)
        # inside: the face whose plane is nearest
        inner = np.zeros_like(p)
        axis = np.argmax(q, axis=-1)
        np.put_along_axis(inner, axis[..., None], np.take_along_axis(sign, axis[..., None], axis=-1), axis=-1)
        return np.where(pos_norm > 0, outer, inner)

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(_vec(self.center)) + np.linalg.norm(_vec(self.half_extents)))

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Start and end points of the 12 box edges"""
        c, h = _vec(self.center), _vec(self.half_extents)
        corners = np.array([[sx, sy, sz] for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)], dtype=np.float64)
        corners = c + corners * h
        pairs = [(i, j) for i in range(8) for j in range(i + 1, 8)
                 if bin(i ^ j).count('1') == 1]
        starts = np.array([corners[i] for i, _ in pairs])
        ends = np.array([corners[j] for _, j in pairs])
        return starts, ends

    def primitives(self) -> List:
        return [self]


@dataclass
class Torus:
    """Torus around the z axis through `center`"""
    center: Sequence[float] = (0.0, 0.0, 0.0)
    major: float = 0.5
    minor: float = 0.2
    albedo: Sequence[float] = (0.4, 0.8, 0.4)

    def _ring(self, x: np.ndarray):
        p = x - _vec(self.center)
        rho = np.linalg.norm(p[..., :2], axis=-1)
        q = np.stack([rho - self.major, p[..., 2]], axis=-1)
        return p, rho, q

    def sdf(self, x: np.ndarray) -> np.ndarray:
        _, _, q = self._ring(x)
        return np.linalg.norm(q, axis=-1) - self.minor

    def normal(self, x: np.ndarray) -> np.ndarray:
        p, rho, q = self._ring(x)
        q_norm = np.maximum(np.linalg.norm(q, axis=-1), 1e-300)
        radial = p[..., :2] / np.maximum(rho, 1e-300)[..., None]
        n = np.concatenate([radial * q[..., :1], q[..., 1:]], axis=-1)
        return n / q_norm[..., None]

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(_vec(self.center)) + self.major + self.minor)

    def primitives(self) -> List:
        return [self]


@dataclass
class Union:
    children: List = field(default_factory=list)

    def _pick(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        values = np.stack([child.sdf(x) for child in self.children], axis=0)
        return values, np.argmin(values, axis=0)

    def sdf(self, x: np.ndarray) -> np.ndarray:
        return np.min(np.stack([child.sdf(x) for child in self.children], axis=0), axis=0)

    def select(self, x: np.ndarray) -> np.ndarray:
        return self._pick(x)[1]

    def normal(self, x: np.ndarray) -> np.ndarray:
        choice = self.select(x)
        normals = np.stack([child.normal(x) for child in self.children], axis=0)
        return np.take_along_axis(normals, choice[None, ..., None], axis=0)[0]

    def albedo_at(self, x: np.ndarray) -> np.ndarray:
        choice = self.select(x)
        albedos = np.stack([albedo_at(child, x) for child in self.children], axis=0)
        return np.take_along_axis(albedos, choice[None, ..., None], axis=0)[0]

    def bounding_radius(self) -> float:
        return max(child.bounding_radius() for child in self.children)

    def primitives(self) -> List:
        return [p for child in self.children for p in child.primitives()]


@dataclass
class Intersection(Union):
    def _pick(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        values = np.stack([child.sdf(x) for child in self.children], axis=0)
        return values, np.argmax(values, axis=0)

    def sdf(self, x: np.ndarray) -> np.ndarray:
        return np.max(np.stack([child.sdf(x) for child in self.children], axis=0), axis=0)

    def bounding_radius(self) -> float:
        return min(child.bounding_radius() for child in self.children)


def albedo_at(node, x: np.ndarray) -> np.ndarray:
    if isinstance(node, Union):
        return node.albedo_at(x)
    return np.broadcast_to(_vec(node.albedo), x.shape).copy()
