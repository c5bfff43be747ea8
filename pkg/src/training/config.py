from dataclasses import asdict, dataclass
from typing import Any, Dict

from src.encoding.spatial_mask import MASK_ACTIVATIONS, MASK_MODES
from src.nn.core import PRECISIONS
from src.utils.errors import ConfigurationError


@dataclass
class TrainConfig:
    # SDF hash grid
    n_levels: int = 16
    n_min: int = 32
    n_max: int = 2048
    feature_dim: int = 8
    log2_table_size: int = 22

    # spatial mask
    mask_mode: str = 'learned'
    mask_activation: str = 'sigmoid'
    mask_levels: int = 8
    mask_d_min: int = 5
    mask_d_max: int = 11
    mask_feature_dim: int = 4
    mask_log2_table_size: int = 18
    mask_hidden: int = 16
    mask_output_bias: float = 1.0
    freeze_mask: bool = False

    # networks
    sdf_hidden: int = 256
    rgb_hidden: int = 256
    rgb_layers: int = 4
    softplus_beta: float = 100.0
    sh_bands: int = 4
    init_radius: float = 0.5
    zeta_init: float = 0.3

    # rendering
    rays_per_step: int = 1024
    n_samples: int = 128
    chunk_rays: int = 64

    # optimisation
    steps: int = 20000
    initial_levels: int = 4
    unveil_interval: int = 1250
    lr: float = 1e-3
    lr_warmup: int = 1000
    lr_final_ratio: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-15

    # losses
    w_eik: float = 0.1
    w_curv: float = 5e-4
    curvature: bool = True
    curvature_warmup: int = 1000
    max_consecutive_skips: int = 100

    seed: int = 0
    precision: str = 'float32'

    def validate(self) -> 'TrainConfig':
        problems = []
        if self.w_eik < 0 or self.w_curv < 0:
            problems.append("loss weights must be non-negative")
        if not 1 <= self.initial_levels <= self.n_levels:
            problems.append(f"initial_levels must be in [1, {self.n_levels}]")
        if self.unveil_interval < 1:
            problems.append("unveil_interval must be positive")
        if self.mask_mode not in MASK_MODES:
            problems.append(f"mask_mode must be one of {MASK_MODES}")
        if self.mask_activation not in MASK_ACTIVATIONS:
            problems.append(f"mask_activation must be one of {MASK_ACTIVATIONS}")
        if self.mask_d_min > self.mask_d_max:
            problems.append("mask_d_min must not exceed mask_d_max")
        if self.precision not in PRECISIONS:
            problems.append(f"precision must be one of {list(PRECISIONS)}")
        if self.sh_bands not in (1, 2, 3, 4):
            problems.append("sh_bands must be between 1 and 4")
        if self.steps < 0:
            problems.append("steps must be non-negative")
        for name in ('rays_per_step', 'n_samples', 'chunk_rays', 'sdf_hidden', 'rgb_hidden'):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if problems:
            raise ConfigurationError("Invalid training config: " + "; ".join(problems))
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
