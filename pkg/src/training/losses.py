from typing import Dict, Optional, Tuple

import numpy as np

from src.training.config import TrainConfig
from src.utils.errors import NonFiniteLossError


def loss_rgb(rendered: np.ndarray, target: np.ndarray, normalizer: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """Mean absolute error over rays and channels; returns (loss, d loss / d rendered).

    `normalizer` overrides the element count when the batch is a chunk of a larger one.
    """
    count = rendered.size if normalizer is None else normalizer
    diff = rendered - target
    return float(np.abs(diff).sum() / count), np.sign(diff) / count


def loss_eikonal(normals: np.ndarray, normalizer: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """Mean of (|grad| - 1)^2 over the batch; returns (loss, d loss / d normals)"""
    count = normals.shape[0] if normalizer is None else normalizer
    if count == 0:
        return 0.0, np.zeros_like(normals)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    excess = norm - 1.0
    grad = 2.0 * excess * normals / np.maximum(norm, 1e-12) / count
    return float(np.sum(excess * excess) / count), grad


def loss_curvature(laplacians: np.ndarray, normalizer: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """Mean absolute Laplacian; returns (loss, d loss / d laplacians)"""
    count = laplacians.shape[0] if normalizer is None else normalizer
    if count == 0:
        return 0.0, np.zeros_like(laplacians)
    return float(np.abs(laplacians).sum() / count), np.sign(laplacians) / count


def curvature_weight(step: int, cfg: TrainConfig) -> float:
    """w_curv ramped linearly from zero over the warmup, zero when curvature is off"""
    if not cfg.curvature:
        return 0.0
    if cfg.curvature_warmup <= 0:
        return cfg.w_curv
    return cfg.w_curv * min(1.0, step / cfg.curvature_warmup)


def total_loss(rgb: float,
               eik: float,
               curv: float,
               cfg: TrainConfig,
               w_curv: Optional[float] = None) -> float:
    """L = L_rgb + w_eik L_eik + w_curv L_curv"""
    components: Dict[str, float] = {'rgb': rgb, 'eikonal': eik, 'curvature': curv}
    bad = [name for name, value in components.items() if not np.isfinite(value)]
    if bad:
        raise NonFiniteLossError(f"Non-finite loss components: {', '.join(bad)}", components)
    if w_curv is None:
        w_curv = cfg.w_curv if cfg.curvature else 0.0
    return rgb + cfg.w_eik * eik + w_curv * curv
