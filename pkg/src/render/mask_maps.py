from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.render.camera import CameraModel
from src.render.renderer import composite, intersect_unit_sphere, stratified_depths
from src.utils.errors import ConfigurationError
from src.utils.parallel import ordered_map

BAND_NAMES = ('low', 'mid', 'high')


def band_levels(n_levels: int) -> Dict[str, Tuple[int, int]]:
    """Half-open 0-based level ranges: low = 1..L/2, mid = L/2+1..L-2, high = L-1..L in 1-based terms"""
    half = n_levels // 2
    return {'low': (0, half), 'mid': (half, max(half, n_levels - 2)), 'high': (max(half, n_levels - 2), n_levels)}


def named_bands(n_levels: int) -> List[Tuple[str, Tuple[int, int]]]:
    """The nonempty named bands; grids with 4 or fewer levels have no mid band"""
    return [(name, band) for name, band in band_levels(n_levels).items() if band[1] > band[0]]


def parse_band(text: str, n_levels: int) -> Tuple[str, Tuple[int, int]]:
    """A band name or an explicit 1-based inclusive range such as '9-14'"""
    text = text.strip()
    if text in BAND_NAMES:
        start, end = band_levels(n_levels)[text]
    else:
        try:
            first, last = (int(p) for p in text.split('-', 1)) if '-' in text else (int(text), int(text))
        except ValueError:
            raise ConfigurationError(f"Band '{text}' is neither {BAND_NAMES} nor a level range like 9-14")
        if not 1 <= first <= last <= n_levels:
            raise ConfigurationError(f"Band '{text}' outside levels 1..{n_levels}")
        start, end = first - 1, last
    if end <= start:
        raise ConfigurationError(f"Band '{text}' is empty for a {n_levels}-level grid")
    return text, (start, end)


def parse_bands(items: Sequence[str], n_levels: int) -> List[Tuple[str, Tuple[int, int]]]:
    return [parse_band(item, n_levels) for item in items]


def band_max(mask: np.ndarray, band: Tuple[int, int]) -> np.ndarray:
    """Per-point maximum of s_l over the band"""
    start, end = band
    return mask[:, start:end].max(axis=1)


def band_mask_mean(model, points: np.ndarray, band: Tuple[int, int]) -> float:
    return float(band_max(model.mask_values(points), band).mean())


def render_mask_map(model,
                    camera: CameraModel,
                    band: Tuple[int, int],
                    chunk: int = 4096,
                    workers: int = 1) -> np.ndarray:
    """Band mask values volume-rendered with the SDF-induced weights at bin midpoints; (H, W)"""
    origins, dirs = camera.pixel_rays()
    n_samples = model.renderer.n_samples

    def render_chunk(start: int) -> np.ndarray:
        o, d = origins[start:start + chunk], dirs[start:start + chunk]
        near, far, hit = intersect_unit_sphere(o, d)
        heat = np.zeros(len(o))
        n_hit = int(hit.sum())
        if n_hit == 0:
            return heat
        depths = stratified_depths(near[hit], far[hit], n_samples)
        points = (o[hit, None, :] + depths[..., None] * d[hit, None, :]).reshape(-1, 3)
        sdf = model.sdf_values(points).reshape(n_hit, n_samples)
        alpha, _ = model.converter.alpha(sdf)
        _, weights, _ = composite(alpha, np.zeros((n_hit, n_samples, 3), dtype=alpha.dtype), (0.0, 0.0, 0.0))
        values = band_max(model.mask_values(points), band).reshape(n_hit, n_samples)
        heat[hit] = np.sum(weights * values, axis=1)
        return heat

    parts = ordered_map(render_chunk, list(range(0, origins.shape[0], chunk)), workers)
    return np.concatenate(parts).reshape(camera.height, camera.width)
