import logging
from dataclasses import dataclass
from typing import Any, MutableMapping, Optional, Protocol, Tuple

import numpy as np
from scipy.special import expit, log_expit

from src.nn.core import ParameterStore, get_dtype
from src.render.camera import CameraModel
from src.utils.errors import ContractViolation
from src.utils.parallel import ordered_map


@dataclass
class FieldOutput:
    sdf: np.ndarray        # (n,)
    rgb: np.ndarray        # (n, 3)
    normal: np.ndarray     # (n, 3), numerical gradient of the SDF
    laplacian: np.ndarray  # (n,)


class RadianceField(Protocol):
    def evaluate(self, points: np.ndarray, dirs: np.ndarray) -> Tuple[FieldOutput, Any]:
        ...

    def backward(self, cache: Any, d_sdf, d_rgb, d_normal, d_laplacian, grads) -> None:
        ...


def alpha_from_sdf(sdf_i, sdf_next, s: float):
    """Opacity of the segment between two SDF samples for a logistic CDF of sharpness s.

    Computed as 1 - exp(log phi(s*b) - log phi(s*a)), clamped at 0.
    """
    a = np.asarray(sdf_i)
    b = np.asarray(sdf_next)
    ratio = np.exp(log_expit(s * b) - log_expit(s * a))
    return np.maximum(1.0 - ratio, 0.0)


@dataclass
class AlphaCache:
    sdf: np.ndarray
    ratio: np.ndarray
    sharpness: float


class OpacityConverter:
    """Trainable sharpness s = exp(10 * zeta) turning SDF samples into opacities"""

    def __init__(self, store: ParameterStore, name: str = 'renderer.zeta', init: float = 0.3):
        self.store = store
        self.name = name
        store.add(name, np.array([init]))

    @property
    def zeta(self) -> float:
        return float(self.store.params[self.name][0])

    @property
    def sharpness(self) -> float:
        return float(np.exp(10.0 * self.store.params[self.name][0]))

    def alpha(self, sdf: np.ndarray) -> Tuple[np.ndarray, AlphaCache]:
        """sdf (rays, M) -> alpha (rays, M); the last sample pairs with itself"""
        s = self.sharpness
        sdf_next = np.concatenate([sdf[:, 1:], sdf[:, -1:]], axis=1)
        ratio = np.exp(log_expit(s * sdf_next) - log_expit(s * sdf))
        return np.maximum(1.0 - ratio, 0.0), AlphaCache(sdf, ratio, s)

    def backward(self,
                 cache: Optional[AlphaCache],
                 d_alpha: np.ndarray,
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> np.ndarray:
        if cache is None:
            raise ContractViolation("Opacity backward called without a forward cache")
        grads = self.store.grads if grads is None else grads
        s, a, r = cache.sharpness, cache.sdf, cache.ratio
        b = np.concatenate([a[:, 1:], a[:, -1:]], axis=1)
        g = np.where(r < 1.0, d_alpha * r, 0.0)
        tail_a = expit(-s * a)
        tail_b = expit(-s * b)

        d_sdf = g * s * tail_a
        d_next = -g * s * tail_b
        # sample i pairs with sample i + 1; the last one pairs with itself
        d_sdf[:, 1:] += d_next[:, :-1]
        d_sdf[:, -1] += d_next[:, -1]
        d_s = np.sum(g * (a * tail_a - b * tail_b))
        grads[self.name] += d_s * 10.0 * s
        return d_sdf


def composite(alphas: np.ndarray,
              colors: np.ndarray,
              background) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Front-to-back alpha compositing: returns (rgb, weights, residual transmittance)"""
    background = np.asarray(background, dtype=colors.dtype)
    trans = np.cumprod(np.concatenate([np.ones_like(alphas[:, :1]), 1.0 - alphas], axis=1), axis=1)
    weights = trans[:, :-1] * alphas
    residual = trans[:, -1]
    rgb = np.einsum('rm,rmc->rc', weights, colors) + residual[:, None] * background
    return rgb, weights, residual


def composite_backward(alphas: np.ndarray,
                       colors: np.ndarray,
                       background,
                       weights: np.ndarray,
                       d_rgb: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of composite wrt alphas and colors.

    Uses the radiance behind each sample, R_k = a_k c_k + (1 - a_k) R_{k+1}
    with R_M = background, so d rgb / d a_k = T_k (c_k - R_{k+1}).
    """
    n_rays, n_samples = alphas.shape
    d_colors = weights[:, :, None] * d_rgb[:, None, :]
    trans = np.cumprod(np.concatenate([np.ones_like(alphas[:, :1]), 1.0 - alphas[:, :-1]], axis=1), axis=1)
    behind = np.broadcast_to(np.asarray(background, dtype=colors.dtype), (n_rays, 3))
    d_alpha = np.empty_like(alphas)
    for k in range(n_samples - 1, -1, -1):
        c_k = colors[:, k]
        a_k = alphas[:, k:k + 1]
        d_alpha[:, k] = trans[:, k] * np.sum((c_k - behind) * d_rgb, axis=1)
        behind = a_k * c_k + (1.0 - a_k) * behind
    return d_alpha, d_colors


def intersect_unit_sphere(origins: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chord of each ray with the unit sphere: (near, far, hit); tangent rays miss"""
    b = np.sum(origins * dirs, axis=1)
    c = np.sum(origins * origins, axis=1) - 1.0
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    near = np.maximum(-b - root, 0.0)
    far = -b + root
    hit = (disc > 0) & (far > near)
    return near, far, hit


def stratified_depths(near: np.ndarray, far: np.ndarray, n_samples: int, u: Optional[np.ndarray] = None) -> np.ndarray:
    """t_i = near + (far - near)(i + u_i) / M; u = 0.5 gives bin midpoints"""
    if u is None:
        u = np.full((near.shape[0], n_samples), 0.5)
    bins = (np.arange(n_samples)[None, :] + u) / n_samples
    return near[:, None] + (far - near)[:, None] * bins


def sample_ray(origin, direction, n_samples: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Stratified depths along one ray; empty when the ray misses the unit sphere"""
    o = np.asarray(origin, dtype=np.float64)[None, :]
    d = np.asarray(direction, dtype=np.float64)[None, :]
    near, far, hit = intersect_unit_sphere(o, d)
    if not hit[0]:
        return np.empty(0)
    u = rng.random((1, n_samples)) if rng is not None else None
    return stratified_depths(near[hit], far[hit], n_samples, u)[0]


@dataclass
class RenderOutput:
    rgb: np.ndarray          # (rays, 3)
    weights: np.ndarray      # (rays, M), zero rows for missed rays
    residual: np.ndarray     # (rays,)
    hit: np.ndarray          # (rays,) bool
    depths: np.ndarray       # (hit rays, M)
    points: np.ndarray       # (hit rays * M, 3)
    sdf: np.ndarray          # (hit rays, M)
    alpha: np.ndarray        # (hit rays, M)
    normal: np.ndarray       # (hit rays * M, 3)
    laplacian: np.ndarray    # (hit rays * M,)


@dataclass
class RenderCache:
    hit: np.ndarray
    field: Any
    alpha: AlphaCache
    colors: np.ndarray


class VolumeRenderer:
    def __init__(self, converter: OpacityConverter, n_samples: int = 128, background=(1.0, 1.0, 1.0)):
        self.logger = logging.getLogger('renderer')
        self.converter = converter
        self.n_samples = n_samples
        self.background = np.asarray(background, dtype=np.float64)

    def render(self,
               field: RadianceField,
               origins: np.ndarray,
               dirs: np.ndarray,
               u: Optional[np.ndarray] = None) -> Tuple[RenderOutput, Optional[RenderCache]]:
        """Render a ray batch; `u` (rays, M) holds stratification offsets, None for midpoints"""
        dtype = get_dtype()
        n_rays, M = origins.shape[0], self.n_samples
        background = self.background.astype(dtype)
        near, far, hit = intersect_unit_sphere(origins, dirs)

        rgb = np.tile(background, (n_rays, 1))
        weights = np.zeros((n_rays, M), dtype=dtype)
        residual = np.ones(n_rays, dtype=dtype)
        n_hit = int(hit.sum())
        if n_hit == 0:
            empty = np.zeros((0, M), dtype=dtype)
            return RenderOutput(rgb, weights, residual, hit, empty, np.zeros((0, 3), dtype=dtype),
                                empty, empty, np.zeros((0, 3), dtype=dtype),
                                np.zeros(0, dtype=dtype)), None

        depths = stratified_depths(near[hit], far[hit], M, None if u is None else u[hit])
        points = (origins[hit, None, :] + depths[..., None] * dirs[hit, None, :]).reshape(-1, 3)
        view = np.repeat(dirs[hit], M, axis=0)
        out, field_cache = field.evaluate(points.astype(dtype), view.astype(dtype))

        sdf = out.sdf.reshape(n_hit, M)
        alpha, alpha_cache = self.converter.alpha(sdf)
        colors = out.rgb.reshape(n_hit, M, 3)
        rgb_hit, w_hit, res_hit = composite(alpha, colors, background)
        rgb[hit] = rgb_hit
        weights[hit] = w_hit
        residual[hit] = res_hit

        output = RenderOutput(rgb, weights, residual, hit, depths.astype(dtype), points.astype(dtype),
                              sdf, alpha, out.normal, out.laplacian)
        return output, RenderCache(hit, field_cache, alpha_cache, colors)

    def backward(self,
                 field: RadianceField,
                 output: RenderOutput,
                 cache: Optional[RenderCache],
                 d_rgb: np.ndarray,
                 d_normal: Optional[np.ndarray] = None,
                 d_laplacian: Optional[np.ndarray] = None,
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> None:
        """d_normal / d_laplacian are per hit sample, matching output.normal / output.laplacian"""
        if cache is None:
            if output.hit.any():
                raise ContractViolation("Render backward called without a forward cache")
            return
        hit = cache.hit
        d_alpha, d_colors = composite_backward(output.alpha, cache.colors, self.background.astype(cache.colors.dtype),
                                               output.weights[hit], d_rgb[hit])
        d_sdf = self.converter.backward(cache.alpha, d_alpha, grads)
        field.backward(cache.field, d_sdf.reshape(-1), d_colors.reshape(-1, 3), d_normal, d_laplacian, grads)


def render_image(field: RadianceField,
                 renderer: VolumeRenderer,
                 camera: CameraModel,
                 chunk: int = 4096,
                 workers: int = 1) -> np.ndarray:
    """Full frame through pixel centres and bin midpoints; (height, width, 3)"""
    origins, dirs = camera.pixel_rays()
    starts = list(range(0, origins.shape[0], chunk))

    def render_chunk(start: int) -> np.ndarray:
        out, _ = renderer.render(field, origins[start:start + chunk], dirs[start:start + chunk])
        return out.rgb

    rows = ordered_map(render_chunk, starts, workers)
    return np.concatenate(rows, axis=0).reshape(camera.height, camera.width, 3)
