import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from src.field.sdf_network import stencil_points, stencil_reduce
from src.nn.core import get_dtype
from src.render.camera import CameraModel, fibonacci_sphere, look_at
from src.render.image_io import ImageUtils
from src.render.renderer import FieldOutput, intersect_unit_sphere
from src.scene.manifest import SceneManifest
from src.scene.primitives import Box, Sphere, Torus
from src.scene.primitives import Union as UnionNode
from src.scene.primitives import albedo_at
from src.utils.errors import ConfigurationError

CAMERA_RADIUS = 2.5
TRACE_TOL = 1e-5
SURFACE_TOL = 1e-6


class AnalyticScene:
    """Composition of analytic primitives with Lambertian shading under a directional light"""

    def __init__(self,
                 root,
                 name: str = '',
                 light_dir: Sequence[float] = (0.4, -0.3, 0.85),
                 ambient: float = 0.1,
                 background: Sequence[float] = (1.0, 1.0, 1.0)):
        self.logger = logging.getLogger('scene_oracle')
        self.root = root
        self.name = name
        light = np.asarray(light_dir, dtype=np.float64)
        self.light_dir = light / np.linalg.norm(light)
        self.ambient = ambient
        self.background = np.asarray(background, dtype=np.float64)
        radius = root.bounding_radius()
        if radius >= 1.0:
            raise ConfigurationError(f"Scene '{name}' reaches radius {radius:.3f}, must stay inside the unit sphere")

    def analytic_sdf(self, x: np.ndarray) -> np.ndarray:
        """Exact for single primitives; min/max compositions give a bound off the seams"""
        return self.root.sdf(np.asarray(x, dtype=np.float64))

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.root.normal(np.asarray(x, dtype=np.float64))

    def albedo(self, x: np.ndarray) -> np.ndarray:
        return albedo_at(self.root, np.asarray(x, dtype=np.float64))

    def shade(self, x: np.ndarray) -> np.ndarray:
        lambert = np.maximum(self.normal(x) @ self.light_dir, 0.0)
        return np.clip(self.albedo(x) * lambert[:, None] + self.ambient, 0.0, 1.0)

    def primitives(self):
        return self.root.primitives()


@dataclass
class TraceResult:
    hit: np.ndarray
    t: np.ndarray
    points: np.ndarray
    exhausted: int


def sphere_trace(scene: AnalyticScene,
                 origins: np.ndarray,
                 dirs: np.ndarray,
                 max_steps: int = 256,
                 tol: float = TRACE_TOL) -> TraceResult:
    """March t += sdf from the unit-sphere entry until sdf < tol (hit) or past the exit (miss)"""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    near, far, inside = intersect_unit_sphere(origins, dirs)
    t = near.copy()
    hit = np.zeros(len(t), dtype=bool)
    active = inside.copy()
    for _ in range(max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        d = scene.analytic_sdf(origins[idx] + t[idx, None] * dirs[idx])
        done = d < tol
        hit[idx[done]] = True
        t[idx[~done]] += d[~done]
        active[idx[done]] = False
        active[idx[~done & (t[idx] > far[idx])]] = False
    exhausted = int(active.sum())
    if exhausted:
        scene.logger.warning(f"{exhausted} rays exceeded {max_steps} sphere-tracing steps, treated as misses")
    points = origins + t[:, None] * dirs
    return TraceResult(hit, t, points, exhausted)


def render_oracle(scene: AnalyticScene, camera: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """Shaded image and hit mask of a camera view, (H, W, 3) and (H, W)"""
    origins, dirs = camera.pixel_rays()
    trace = sphere_trace(scene, origins, dirs)
    image = np.tile(scene.background, (origins.shape[0], 1))
    if trace.hit.any():
        image[trace.hit] = scene.shade(trace.points[trace.hit])
    return image.reshape(camera.height, camera.width, 3), trace.hit.reshape(camera.height, camera.width)


def dataset_cameras(n_views: int, resolution: int, seed: int) -> list:
    phase = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi)
    centers = CAMERA_RADIUS * fibonacci_sphere(n_views, phase)
    focal = float(resolution)
    return [CameraModel(focal, focal, resolution / 2.0, resolution / 2.0, resolution, resolution, look_at(c))
            for c in centers]


def generate_dataset(scene: AnalyticScene,
                     n_views: int,
                     resolution: int,
                     seed: int,
                     out_dir: Union[str, Path]) -> SceneManifest:
    """Render n_views posed PPM images on a Fibonacci sphere and write manifest.json"""
    if n_views < 2:
        raise ConfigurationError(f"A dataset needs at least 2 views, got {n_views}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        cameras = dataset_cameras(n_views, resolution, seed)
        frames = []
        for i, camera in enumerate(tqdm(cameras, desc="Rendering views")):
            image, _ = render_oracle(scene, camera)
            file_name = f"view_{i:03d}.ppm"
            ImageUtils.write_ppm(out_dir / file_name, image)
            frames.append({'file': file_name, 'transform': camera.pose.reshape(-1).tolist()})

        manifest = SceneManifest(intrinsics=cameras[0].to_manifest(),
                                 background=scene.background.tolist(),
                                 frames=frames, scene=scene.name, scale=1.0, seed=seed)
        manifest.save(out_dir)
        scene.logger.info(f"Dataset written: {n_views} views of {resolution}x{resolution} to {out_dir}")
        return manifest
    except Exception as e:
        scene.logger.error(f"Dataset generation error: {str(e)}")
        raise


def project_to_surface(scene: AnalyticScene, points: np.ndarray, iterations: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """Move points along the analytic gradient until |sdf| < 1e-6; returns (points, converged)"""
    points = points.copy()
    for _ in range(iterations):
        d = scene.analytic_sdf(points)
        if np.all(np.abs(d) < SURFACE_TOL):
            break
        points -= d[:, None] * scene.normal(points)
    return points, np.abs(scene.analytic_sdf(points)) < SURFACE_TOL


def sample_surface(scene: AnalyticScene, n_points: int, seed: int, band: float = 0.02) -> np.ndarray:
    """Approximately uniform surface samples: uniform points within `band` of the surface, projected.

    Points that fail to converge (composition seams) are rejected.
    """
    if n_points < 1:
        raise ConfigurationError("n_points must be at least 1")
    rng = np.random.default_rng(seed)
    collected, total = [], 0
    while total < n_points:
        candidates = rng.uniform(-1.0, 1.0, (max(4 * n_points, 1024), 3))
        candidates = candidates[np.abs(scene.analytic_sdf(candidates)) < band]
        projected, ok = project_to_surface(scene, candidates)
        collected.append(projected[ok])
        total += int(ok.sum())
    return np.concatenate(collected)[:n_points]


def sample_primitive_surface(scene: AnalyticScene, kind: type, n_points: int, seed: int) -> np.ndarray:
    """Surface samples of the composed scene that lie on a primitive of the given type"""
    members = [p for p in scene.primitives() if isinstance(p, kind)]
    if not members:
        raise ConfigurationError(f"Scene '{scene.name}' has no {kind.__name__} primitive")
    collected, total, round_seed = [], 0, seed
    while total < n_points:
        points = sample_surface(scene, 2 * n_points, round_seed)
        on_kind = np.min(np.stack([np.abs(p.sdf(points)) for p in members]), axis=0) < SURFACE_TOL
        collected.append(points[on_kind])
        total += int(on_kind.sum())
        round_seed += 1
    return np.concatenate(collected)[:n_points]


def sample_box_edges(scene: AnalyticScene, n_points: int, seed: int) -> np.ndarray:
    """Points on the edges of every box of the scene that lie on the composed surface"""
    boxes = [p for p in scene.primitives() if isinstance(p, Box)]
    if not boxes:
        raise ConfigurationError(f"Scene '{scene.name}' has no box edges")
    starts = np.concatenate([box.edges()[0] for box in boxes])
    ends = np.concatenate([box.edges()[1] for box in boxes])
    rng = np.random.default_rng(seed)
    collected, total = [], 0
    while total < n_points:
        edge = rng.integers(0, len(starts), 2 * n_points)
        t = rng.random(2 * n_points)[:, None]
        points = starts[edge] + t * (ends[edge] - starts[edge])
        points = points[np.abs(scene.analytic_sdf(points)) < SURFACE_TOL]
        collected.append(points)
        total += len(points)
    return np.concatenate(collected)[:n_points]


class AnalyticField:
    """Analytic SDF with a flat color, usable wherever the renderer expects a radiance field"""

    def __init__(self, scene: AnalyticScene, eps: float = 1e-3, color: Sequence[float] = (1.0, 1.0, 1.0)):
        self.scene = scene
        self.eps = eps
        self.color = np.asarray(color, dtype=np.float64)

    def evaluate(self, points: np.ndarray, dirs: np.ndarray):
        dtype = get_dtype()
        x = np.asarray(points, dtype=np.float64)
        values = self.scene.analytic_sdf(stencil_points(x, self.eps))
        normal, lap = stencil_reduce(values, self.eps)
        rgb = np.tile(self.color, (x.shape[0], 1))
        out = FieldOutput(sdf=values[:x.shape[0]].astype(dtype), rgb=rgb.astype(dtype),
                          normal=normal.astype(dtype), laplacian=lap.astype(dtype))
        return out, None

    def backward(self, cache, d_sdf, d_rgb, d_normal, d_laplacian, grads=None) -> None:
        return None


SCENES: Dict[str, Callable[[], AnalyticScene]] = {
    'sphere': lambda: AnalyticScene(Sphere((0.0, 0.0, 0.0), 0.5), name='sphere'),
    'box': lambda: AnalyticScene(Box((0.0, 0.0, 0.0), (0.3, 0.3, 0.3)), name='box'),
    'torus': lambda: AnalyticScene(Torus((0.0, 0.0, 0.0), 0.5, 0.2), name='torus'),
    'sphere-box': lambda: AnalyticScene(
        UnionNode([Sphere((-0.25, 0.0, 0.0), 0.35), Box((0.3, 0.0, 0.0), (0.25, 0.25, 0.25))]),
        name='sphere-box'),
}


def build_scene(name: str) -> AnalyticScene:
    if name not in SCENES:
        raise ConfigurationError(f"Unknown scene '{name}', available: {', '.join(sorted(SCENES))}")
    return SCENES[name]()
