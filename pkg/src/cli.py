import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from rich.console import Console
from rich.table import Table

from src.evaluation import evaluate_reconstruction, extract_mesh, load_trained_model
from src.field.neural_surface import build_model
from src.mesh.mesh_io import read_obj, write_mesh
from src.render.image_io import ImageUtils
from src.render.mask_maps import named_bands, parse_bands, render_mask_map
from src.render.renderer import render_image
from src.scene.chamfer import BACKENDS, DEFAULT_THRESHOLD
from src.scene.manifest import SceneManifest
from src.scene.oracle import SCENES, build_scene, generate_dataset
from src.training.dataset import SceneDataset
from src.training.trainer import Trainer
from src.utils.checkpoint import list_checkpoints, load_checkpoint
from src.utils.config import RunConfig, load_logging_config, load_run_config, save_run_config
from src.utils.errors import ConfigurationError, TrainingDivergence
from src.utils.logger import CustomLogger
from src.utils.parallel import resolve_workers

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptive_hash",
        description="Neural surface reconstruction with spatially adaptive hash encodings")
    parser.add_argument("--log-dir", type=str, help="Directory for run logs")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Render a synthetic posed-image dataset of an analytic scene")
    gen.add_argument("--scene", type=str, default="sphere-box", help=f"One of {sorted(SCENES)}")
    gen.add_argument("--views", type=int, default=48, help="Number of camera views")
    gen.add_argument("--res", type=int, default=128, help="Image width and height in pixels")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=str, required=True, help="Output dataset directory")

    train = sub.add_parser("train", help="Optimise the neural surface on a dataset")
    train.add_argument("-c", "--config", type=str, help="Run config JSON")
    train.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="Override a config key (repeatable)")
    train.add_argument("--dataset", type=str, help="Dataset directory")
    train.add_argument("--output-dir", type=str, help="Run directory for checkpoints and metrics")
    train.add_argument("--mask-activation", type=str, choices=["sigmoid", "softmax"])
    train.add_argument("--seed", type=int)
    train.add_argument("--steps", type=int)
    train.add_argument("--resume", action="store_true", help="Continue from the latest checkpoint")
    train.add_argument("--quiet", action="store_true", help="Disable the progress bar")

    extract = sub.add_parser("extract-mesh", help="Marching-cubes mesh of a trained SDF")
    extract.add_argument("--checkpoint", type=str, required=True)
    extract.add_argument("--resolution", type=int, help="Samples per axis (default: extract_resolution)")
    extract.add_argument("--out", type=str, required=True, help="Output .obj or .ply")

    render = sub.add_parser("render", help="Volume-render a dataset camera from a checkpoint")
    render.add_argument("--checkpoint", type=str, required=True)
    render.add_argument("--dataset", type=str, help="Dataset directory (default: from the checkpoint config)")
    render.add_argument("--camera", type=int, default=0)
    render.add_argument("--out", type=str, required=True, help="Output .ppm")

    evaluate = sub.add_parser("eval", help="Chamfer-L1 against the analytic scene")
    evaluate.add_argument("--checkpoint", type=str, required=True)
    evaluate.add_argument("--scene", type=str, default="sphere-box")
    evaluate.add_argument("--points", type=int, default=10000, help="Points sampled on each surface")
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--resolution", type=int, help="Extraction samples per axis")
    evaluate.add_argument("--mesh", type=str, help="Evaluate this OBJ instead of extracting")
    evaluate.add_argument("--backend", type=str, choices=list(BACKENDS), default="grid")
    evaluate.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="F-score distance")
    evaluate.add_argument("--mask-report", action="store_true", help="Add box-edge vs sphere band means")
    evaluate.add_argument("--out", type=str, help="Report JSON path")

    masks = sub.add_parser("dump-masks", help="Render per-band spatial mask heat maps")
    masks.add_argument("--checkpoint", type=str, required=True)
    masks.add_argument("--dataset", type=str)
    masks.add_argument("--camera", type=int, default=0)
    masks.add_argument("--bands", type=str, nargs="+",
                       help="Band names or 1-based level ranges such as 9-14 (default: every nonempty named band)")
    masks.add_argument("--out", type=str, required=True, help="Output directory")
    return parser


def _train_config(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.overrides)
    for key, value in (('dataset', args.dataset), ('output_dir', args.output_dir),
                       ('mask_activation', args.mask_activation), ('seed', args.seed), ('steps', args.steps)):
        if value is not None:
            overrides.append(f"{key}={json.dumps(value) if not isinstance(value, str) else value}")
    return load_run_config(args.config, overrides)


def cmd_generate(args: argparse.Namespace, logger) -> int:
    scene = build_scene(args.scene)
    generate_dataset(scene, args.views, args.res, args.seed, args.out)
    logger.info(f"Generated '{args.scene}' with {args.views} views in {args.out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, cfg: RunConfig, logger) -> int:
    workers = resolve_workers(cfg.workers)
    run_dir = Path(cfg.output_dir)
    checkpoint_dir = run_dir / "checkpoints"
    save_run_config(cfg, run_dir / "config.json")

    model = build_model(cfg)
    dataset = SceneDataset(cfg.dataset)
    trainer = Trainer(model, dataset, cfg, workers=workers, metrics_path=run_dir / "metrics.csv")
    if args.resume:
        found = list_checkpoints(checkpoint_dir)
        if found:
            trainer.restore(load_checkpoint(found[-1]))
        else:
            logger.warning(f"No checkpoint in {checkpoint_dir}, starting from scratch")

    logger.info(f"Training {cfg.steps} steps on {cfg.dataset} with {workers} worker(s)")
    trainer.train(checkpoint_dir=checkpoint_dir, checkpoint_interval=cfg.checkpoint_interval,
                  config_echo=cfg.to_dict(), progress=not args.quiet)
    logger.info(f"Training finished at step {trainer.state.step}, {trainer.state.total_skips} skipped steps")
    return EXIT_OK


def cmd_extract(args: argparse.Namespace, logger) -> int:
    cfg, model, _ = load_trained_model(args.checkpoint)
    resolution = args.resolution or cfg.extract_resolution
    mesh = extract_mesh(model, resolution, workers=resolve_workers(cfg.workers))
    write_mesh(mesh, args.out)
    return EXIT_OK


def _camera(dataset_dir: str, index: int):
    cameras = SceneManifest.load(dataset_dir).cameras()
    if not 0 <= index < len(cameras):
        raise ConfigurationError(f"Camera index {index} outside 0..{len(cameras) - 1}")
    return cameras[index]


def cmd_render(args: argparse.Namespace, logger) -> int:
    cfg, model, _ = load_trained_model(args.checkpoint)
    dataset_dir = args.dataset or cfg.dataset
    model.renderer.background = np.asarray(SceneManifest.load(dataset_dir).background, dtype=np.float64)
    model.set_active_levels(model.grid.n_levels)
    image = render_image(model, model.renderer, _camera(dataset_dir, args.camera),
                         workers=resolve_workers(cfg.workers))
    ImageUtils.write_ppm(args.out, image)
    logger.info(f"Rendered camera {args.camera} to {args.out}")
    return EXIT_OK


def _print_report(report: dict) -> None:
    table = Table(title=f"Reconstruction of '{report['scene']}'")
    table.add_column("metric")
    table.add_column("value", justify="right")
    for key in ('chamfer', 'acc', 'comp', 'precision', 'recall', 'fscore', 'mean_abs_laplacian'):
        if key in report:
            table.add_row(key, f"{report[key]:.6f}")
    for band, values in report.get('mask_bands', {}).items():
        table.add_row(f"mask {band} (edges / sphere)", f"{values['edges']:.4f} / {values['sphere']:.4f}")
    Console().print(table)


def cmd_eval(args: argparse.Namespace, logger) -> int:
    cfg, model, _ = load_trained_model(args.checkpoint)
    scene = build_scene(args.scene)
    workers = resolve_workers(cfg.workers)
    if args.mesh:
        mesh = read_obj(args.mesh)
        model.set_active_levels(model.grid.n_levels)
    else:
        mesh = extract_mesh(model, args.resolution or cfg.extract_resolution, workers=workers)
    report = evaluate_reconstruction(mesh, scene, args.points, args.seed, backend=args.backend,
                                     threshold=args.threshold, model=model, mask_report=args.mask_report)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        logger.info(f"Report written: {args.out}")
    _print_report(report)
    return EXIT_OK


def cmd_dump_masks(args: argparse.Namespace, logger) -> int:
    cfg, model, _ = load_trained_model(args.checkpoint)
    n_levels = model.grid.n_levels
    bands = parse_bands(args.bands, n_levels) if args.bands else named_bands(n_levels)
    camera = _camera(args.dataset or cfg.dataset, args.camera)
    model.set_active_levels(model.grid.n_levels)
    out_dir = Path(args.out)
    workers = resolve_workers(cfg.workers)
    for name, band in bands:
        heat = render_mask_map(model, camera, band, workers=workers)
        path = out_dir / f"mask_{name}_cam{args.camera:03d}.ppm"
        ImageUtils.write_ppm(path, ImageUtils.colormap(heat))
        logger.info(f"Band {name} (levels {band[0] + 1}-{band[1]}): mean {heat.mean():.4f} -> {path}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "extract-mesh": cmd_extract,
    "render": cmd_render,
    "eval": cmd_eval,
    "dump-masks": cmd_dump_masks,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log_config = load_logging_config()
    log_dir = args.log_dir or log_config.get('log_dir', 'logs')

    cfg = None
    config_error = None
    if args.command == "train":
        try:
            cfg = _train_config(args)
            log_dir = args.log_dir or cfg.log_dir
        except (ConfigurationError, FileNotFoundError) as e:
            config_error = e

    custom_logger = CustomLogger(name=f"adaptive_hash_{args.command.replace('-', '_')}",
                                 log_dir=log_dir, config=log_config)
    logger = custom_logger.get_logger()
    if config_error is not None:
        logger.error(f"Configuration error: {str(config_error)}")
        return EXIT_USAGE

    try:
        if args.command == "train":
            return cmd_train(args, cfg, logger)
        return COMMANDS[args.command](args, logger)
    except (ConfigurationError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_USAGE
    except TrainingDivergence as e:
        logger.error(f"Training diverged: {str(e)}")
        for line in custom_logger.get_recent_logs(10):
            sys.stderr.write(line)
        return EXIT_DIVERGED
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
