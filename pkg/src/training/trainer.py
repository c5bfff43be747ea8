import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from src.field.neural_surface import NeuralSurface
from src.nn.core import get_dtype
from src.nn.optim import adam_step
from src.render.renderer import intersect_unit_sphere
from src.training.config import TrainConfig
from src.training.dataset import SceneDataset
from src.training.losses import curvature_weight, loss_curvature, loss_eikonal, loss_rgb, total_loss
from src.training.schedule import learning_rate, unveil_schedule
from src.utils.checkpoint import Checkpoint, checkpoint_name, restore_store, save_checkpoint
from src.utils.errors import NonFiniteLossError, TrainingDivergence
from src.utils.parallel import ordered_map

METRIC_FIELDS = ['step', 'L_rgb', 'L_eik', 'L_curv', 'active_levels', 'eps', 'sharpness', 'lr']


@dataclass
class TrainState:
    rng: np.random.Generator
    step: int = 0
    active_levels: int = 1
    eps: float = 0.0
    running: Dict[str, float] = field(default_factory=dict)
    consecutive_skips: int = 0
    total_skips: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {'step': self.step, 'active_levels': self.active_levels, 'eps': self.eps,
                'running': self.running, 'consecutive_skips': self.consecutive_skips,
                'total_skips': self.total_skips}


class Trainer:
    """Joint optimisation of the masked SDF, radiance network and sharpness"""

    def __init__(self,
                 model: NeuralSurface,
                 dataset: SceneDataset,
                 cfg: TrainConfig,
                 workers: int = 1,
                 metrics_path: Optional[Union[str, Path]] = None):
        self.logger = logging.getLogger('trainer')
        self.model = model
        self.dataset = dataset
        self.cfg = cfg
        self.workers = workers
        self.metrics_path = Path(metrics_path) if metrics_path else None
        model.renderer.background = dataset.background

        self.state = TrainState(rng=np.random.default_rng(cfg.seed))
        self.state.active_levels, self.state.eps = unveil_schedule(0, cfg, model.grid)
        model.set_active_levels(self.state.active_levels)

    def _run_chunk(self, batch: Tuple, bounds: Tuple[int, int], normalizers: Tuple[int, int], w_curv: float):
        origins, dirs, targets, u = batch
        start, end = bounds
        n_rgb, n_samples = normalizers
        model = self.model
        grads = model.store.grad_buffer()

        out, cache = model.renderer.render(model, origins[start:end], dirs[start:end], u[start:end])
        l_rgb, d_rgb = loss_rgb(out.rgb, targets[start:end].astype(get_dtype()), n_rgb)
        l_eik, d_normal = loss_eikonal(out.normal, n_samples)
        l_curv, d_lap = loss_curvature(out.laplacian, n_samples)
        model.renderer.backward(
            model, out, cache, d_rgb,
            d_normal * self.cfg.w_eik if self.cfg.w_eik else None,
            d_lap * w_curv if w_curv else None,
            grads)
        return (l_rgb, l_eik, l_curv), grads

    def train_step(self) -> Dict[str, float]:
        cfg, state, model = self.cfg, self.state, self.model
        store = model.store

        active, eps = unveil_schedule(state.step, cfg, model.grid)
        if active != model.active_levels:
            model.set_active_levels(active)
            self.logger.info(f"Step {state.step}: unveiled level {active}, eps = {eps:.5f}")
        state.active_levels, state.eps = active, eps

        clamped_before = model.grid.clamped_points
        store.zero_grad()
        origins, dirs, targets = self.dataset.sample_rays(state.rng, cfg.rays_per_step)
        u = state.rng.random((cfg.rays_per_step, cfg.n_samples))
        hit = intersect_unit_sphere(origins, dirs)[2]
        normalizers = (cfg.rays_per_step * 3, int(hit.sum()) * cfg.n_samples)
        w_curv = curvature_weight(state.step, cfg)

        bounds = [(s, min(s + cfg.chunk_rays, cfg.rays_per_step))
                  for s in range(0, cfg.rays_per_step, cfg.chunk_rays)]
        batch = (origins, dirs, targets, u)
        results = ordered_map(lambda b: self._run_chunk(batch, b, normalizers, w_curv), bounds, self.workers)

        l_rgb = sum(r[0][0] for r in results)
        l_eik = sum(r[0][1] for r in results)
        l_curv = sum(r[0][2] for r in results)
        lr = learning_rate(state.step, cfg)
        metrics = {'step': state.step, 'L_rgb': l_rgb, 'L_eik': l_eik, 'L_curv': l_curv,
                   'active_levels': active, 'eps': eps, 'sharpness': model.converter.sharpness, 'lr': lr}
        # points pushed back into the cube this step, stencil offsets included
        metrics['clamped'] = model.grid.clamped_points - clamped_before

        try:
            metrics['loss'] = total_loss(l_rgb, l_eik, l_curv, cfg, w_curv)
        except NonFiniteLossError as e:
            state.consecutive_skips += 1
            state.total_skips += 1
            self.logger.warning(f"Step {state.step} skipped: {str(e)} {e.components}")
            if state.consecutive_skips > cfg.max_consecutive_skips:
                self.logger.error(f"{state.consecutive_skips} consecutive skipped steps, aborting")
                raise TrainingDivergence(
                    f"Training diverged at step {state.step} after {state.consecutive_skips} skipped steps")
            state.step += 1
            metrics['skipped'] = True
            self._write_metrics(metrics)
            return metrics

        state.consecutive_skips = 0
        store.merge_grads(r[1] for r in results)
        adam_step(store, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        state.step += 1

        for key in ('L_rgb', 'L_eik', 'L_curv'):
            previous = state.running.get(key, metrics[key])
            state.running[key] = 0.9 * previous + 0.1 * metrics[key]
        self.logger.debug(
            f"step {metrics['step']}: rgb {l_rgb:.5f} eik {l_eik:.5f} curv {l_curv:.5f} lr {lr:.2e}, "
            f"{metrics['clamped']} clamped points")
        self._write_metrics(metrics)
        return metrics

    def _write_metrics(self, metrics: Dict[str, float]) -> None:
        if self.metrics_path is None:
            return
        new_file = not self.metrics_path.exists()
        self.metrics_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.metrics_path, 'a', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(METRIC_FIELDS)
            writer.writerow([metrics[name] for name in METRIC_FIELDS])

    def _truncate_metrics(self, step: int) -> None:
        """Drop rows of steps at or after `step`, left behind by a run that went past the restored checkpoint"""
        if self.metrics_path is None or not self.metrics_path.exists():
            return
        with open(self.metrics_path, newline='', encoding='utf-8') as f:
            rows = list(csv.reader(f))
        kept = rows[:1] + [row for row in rows[1:] if int(row[0]) < step]
        if len(kept) == len(rows):
            return
        with open(self.metrics_path, 'w', newline='', encoding='utf-8') as f:
            csv.writer(f).writerows(kept)
        self.logger.info(f"Dropped {len(rows) - len(kept)} metric rows from step {step} on")

    def train(self,
              steps: Optional[int] = None,
              checkpoint_dir: Optional[Union[str, Path]] = None,
              checkpoint_interval: int = 0,
              config_echo: Optional[Dict[str, Any]] = None,
              progress: bool = True) -> List[Dict[str, float]]:
        """Run until `steps` (default cfg.steps); checkpoints every interval and at the end"""
        target = self.cfg.steps if steps is None else steps
        history = []
        for _ in tqdm(range(self.state.step, target), desc="Training", disable=not progress):
            history.append(self.train_step())
            if checkpoint_dir and checkpoint_interval and self.state.step % checkpoint_interval == 0:
                self.save(Path(checkpoint_dir) / checkpoint_name(self.state.step), config_echo)
        if checkpoint_dir:
            final = Path(checkpoint_dir) / checkpoint_name(self.state.step)
            if not final.exists():
                self.save(final, config_echo)
        return history

    def save(self, path: Union[str, Path], config_echo: Optional[Dict[str, Any]] = None) -> Path:
        return save_checkpoint(path, self.model.store, self.state.step,
                               config_echo if config_echo is not None else self.cfg.to_dict(),
                               rng_state=self.state.rng.bit_generator.state,
                               state=self.state.to_dict())

    def restore(self, checkpoint: Checkpoint) -> None:
        restore_store(self.model.store, checkpoint)
        saved = checkpoint.header.get('state', {})
        self.state.step = checkpoint.step
        self.state.running = dict(saved.get('running', {}))
        self.state.consecutive_skips = int(saved.get('consecutive_skips', 0))
        self.state.total_skips = int(saved.get('total_skips', 0))
        if checkpoint.header.get('rng'):
            self.state.rng.bit_generator.state = checkpoint.header['rng']
        self.state.active_levels, self.state.eps = unveil_schedule(self.state.step, self.cfg, self.model.grid)
        self.model.set_active_levels(self.state.active_levels)
        self.logger.info(f"Resumed from step {self.state.step}")
        self._truncate_metrics(self.state.step)
