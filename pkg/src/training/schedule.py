import math
from typing import Tuple

from src.encoding.hash_grid import MultiResHashGrid
from src.field.sdf_network import epsilon_for_level
from src.training.config import TrainConfig


def active_levels_at(step: int, cfg: TrainConfig) -> int:
    return min(cfg.initial_levels + step // cfg.unveil_interval, cfg.n_levels)


def unveil_schedule(step: int, cfg: TrainConfig, grid: MultiResHashGrid) -> Tuple[int, float]:
    """Active level count and numerical-gradient step for a training step"""
    active = active_levels_at(step, cfg)
    return active, epsilon_for_level(active, grid)


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to cfg.lr, then cosine decay to cfg.lr * cfg.lr_final_ratio at cfg.steps"""
    if cfg.lr_warmup > 0 and step < cfg.lr_warmup:
        return cfg.lr * (step + 1) / cfg.lr_warmup
    span = max(cfg.steps - cfg.lr_warmup, 1)
    progress = min(max(step - cfg.lr_warmup, 0) / span, 1.0)
    cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
    return cfg.lr * (cfg.lr_final_ratio + (1.0 - cfg.lr_final_ratio) * cosine)
