import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.field.neural_surface import NeuralSurface, build_model
from src.mesh.marching_cubes import marching_cubes
from src.mesh.mesh_io import TriangleMesh, mesh_to_points
from src.render.mask_maps import band_mask_mean, named_bands
from src.scene.chamfer import DEFAULT_THRESHOLD, chamfer_l1
from src.scene.oracle import AnalyticScene, sample_box_edges, sample_primitive_surface, sample_surface
from src.scene.primitives import Sphere
from src.training.schedule import unveil_schedule
from src.utils.checkpoint import Checkpoint, load_checkpoint, restore_store
from src.utils.config import RunConfig, build_run_config

logger = logging.getLogger('evaluation')

MASK_REPORT_POINTS = 1000


def load_trained_model(path: Union[str, Path]) -> Tuple[RunConfig, NeuralSurface, Checkpoint]:
    """Rebuild the model from the config echoed in a checkpoint and restore its parameters"""
    checkpoint = load_checkpoint(path)
    cfg = build_run_config(checkpoint.config)
    model = build_model(cfg)
    restore_store(model.store, checkpoint)
    model.set_active_levels(unveil_schedule(checkpoint.step, cfg, model.grid)[0])
    logger.info(f"Loaded checkpoint {path} at step {checkpoint.step}")
    return cfg, model, checkpoint


def extract_mesh(model: NeuralSurface,
                 resolution: int,
                 bounds: Tuple[float, float] = (-1.0, 1.0),
                 workers: int = 1) -> TriangleMesh:
    """Zero level set of the deployed field: every level active, live masks"""
    model.set_active_levels(model.grid.n_levels)
    return marching_cubes(lambda p: model.sdf_values(p), resolution, bounds, workers)


def surface_laplacian(model: NeuralSurface, points: np.ndarray, chunk: int = 4096) -> float:
    """Mean |discrete Laplacian| of the SDF over the given points at the current stencil size"""
    total = 0.0
    for start in range(0, len(points), chunk):
        sample, _ = model.sdf.evaluate_stencil(points[start:start + chunk])
        total += float(np.abs(sample.laplacian).sum())
    return total / max(len(points), 1)


def mask_band_report(model: NeuralSurface, scene: AnalyticScene, seed: int,
                     n_points: int = MASK_REPORT_POINTS) -> Dict[str, Dict[str, float]]:
    """Mean band mask on box-edge points against points on the sphere surface"""
    edges = sample_box_edges(scene, n_points, seed)
    sphere = sample_primitive_surface(scene, Sphere, n_points, seed)
    report = {}
    for name, band in named_bands(model.grid.n_levels):
        report[name] = {'edges': band_mask_mean(model, edges, band),
                        'sphere': band_mask_mean(model, sphere, band)}
    return report


def evaluate_reconstruction(mesh: TriangleMesh,
                            scene: AnalyticScene,
                            n_points: int,
                            seed: int,
                            backend: str = 'grid',
                            threshold: float = DEFAULT_THRESHOLD,
                            model: Optional[NeuralSurface] = None,
                            mask_report: bool = False) -> Dict[str, Any]:
    """Chamfer-L1 and F-score of mesh samples against analytic surface samples"""
    reconstruction = mesh_to_points(mesh, n_points, seed)
    reference = sample_surface(scene, n_points, seed)
    result = chamfer_l1(reconstruction, reference, backend=backend, threshold=threshold)
    report: Dict[str, Any] = result.to_dict()
    report.update({'n_points': n_points, 'seed': seed, 'scene': scene.name, 'backend': backend,
                   'n_vertices': int(len(mesh.vertices)), 'n_faces': int(len(mesh.faces))})
    if model is not None:
        report['mean_abs_laplacian'] = surface_laplacian(model, reconstruction)
        if mask_report:
            report['mask_bands'] = mask_band_report(model, scene, seed)
    logger.info(f"Chamfer-L1 {result.chamfer:.6f} (acc {result.acc:.6f}, comp {result.comp:.6f}), "
                f"F-score {result.fscore:.4f} at {threshold}")
    return report
