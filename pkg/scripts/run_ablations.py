import argparse
import sys
from pathlib import Path

import pandas as pd
from rich.console import Console
from rich.table import Table

sys.path.append(str(Path(__file__).parent.parent))

from src.evaluation import evaluate_reconstruction, extract_mesh
from src.field.neural_surface import build_model
from src.scene.manifest import MANIFEST_NAME
from src.scene.oracle import build_scene, generate_dataset
from src.training.dataset import SceneDataset
from src.training.trainer import Trainer
from src.utils.config import load_logging_config, load_run_config
from src.utils.logger import CustomLogger
from src.utils.parallel import resolve_workers

VARIANTS = {
    "adaptive": [],
    "ones": ["mask_mode=ones"],
    "softmax": ["mask_activation=softmax"],
    "no-curvature": ["curvature=false"],
    "mask-coarse": ["mask_d_min=3", "mask_d_max=6"],
    "mask-fine": ["mask_d_min=5", "mask_d_max=9"],
}

# (variant, metric expected lower, variant, metric expected higher), paired by seed
DIRECTIONS = [
    ("adaptive", "chamfer", "ones", "chamfer"),
    ("adaptive", "chamfer", "softmax", "chamfer"),
    ("adaptive", "mean_abs_laplacian", "no-curvature", "mean_abs_laplacian"),
    ("adaptive", "mask_high_sphere", "adaptive", "mask_high_edges"),
]


def parse_args():
    parser = argparse.ArgumentParser(description="Seeded ablation runs summarised by Chamfer-L1")
    parser.add_argument("-c", "--config", type=str, help="Base run config JSON")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--scene", type=str, default="sphere-box")
    parser.add_argument("--views", type=int, default=48)
    parser.add_argument("--res", type=int, default=128)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--variants", type=str, nargs="+", default=list(VARIANTS), choices=list(VARIANTS))
    parser.add_argument("--points", type=int, default=10000)
    parser.add_argument("--out", type=str, default="runs/ablations")
    return parser.parse_args()


def run_one(args, variant: str, seed: int, dataset_dir: Path, scene, logger) -> dict:
    run_dir = Path(args.out) / variant / f"seed_{seed}"
    overrides = list(args.overrides) + VARIANTS[variant] + [
        f"seed={seed}", f"dataset={dataset_dir}", f"output_dir={run_dir}"]
    cfg = load_run_config(args.config, overrides)
    workers = resolve_workers(cfg.workers)

    model = build_model(cfg)
    trainer = Trainer(model, SceneDataset(cfg.dataset), cfg, workers=workers,
                      metrics_path=run_dir / "metrics.csv")
    trainer.train(checkpoint_dir=run_dir / "checkpoints", checkpoint_interval=cfg.checkpoint_interval,
                  config_echo=cfg.to_dict())

    mesh = extract_mesh(model, cfg.extract_resolution, workers=workers)
    report = evaluate_reconstruction(mesh, scene, args.points, seed, model=model,
                                     mask_report=cfg.mask_mode == "learned")
    row = {"variant": variant, "seed": seed, "skipped_steps": trainer.state.total_skips}
    row.update({k: v for k, v in report.items() if not isinstance(v, dict)})
    for band, values in report.get("mask_bands", {}).items():
        row[f"mask_{band}_edges"] = values["edges"]
        row[f"mask_{band}_sphere"] = values["sphere"]
    logger.info(f"{variant} seed {seed}: chamfer {report['chamfer']:.6f}")
    return row


def summary_table(results: pd.DataFrame) -> Table:
    summary = results.groupby("variant").agg(
        chamfer_mean=("chamfer", "mean"),
        chamfer_std=("chamfer", "std"),
        fscore_mean=("fscore", "mean"),
        laplacian_mean=("mean_abs_laplacian", "mean"),
        runs=("seed", "count"))
    table = Table(title="Ablation summary")
    table.add_column("variant")
    for column in summary.columns:
        table.add_column(column, justify="right")
    for variant, row in summary.iterrows():
        table.add_row(variant, *[f"{value:.6f}" if isinstance(value, float) else str(value)
                                 for value in row.tolist()])
    return table


def direction_counts(results: pd.DataFrame) -> pd.DataFrame:
    """Seeds on which each expected ordering holds, out of the seeds where both sides were measured"""
    rows = []
    for low_variant, low_metric, high_variant, high_metric in DIRECTIONS:
        if low_metric not in results.columns or high_metric not in results.columns:
            continue
        low = results[results["variant"] == low_variant].set_index("seed")[low_metric].rename("low")
        high = results[results["variant"] == high_variant].set_index("seed")[high_metric].rename("high")
        paired = pd.concat([low, high], axis=1).dropna()
        if paired.empty:
            continue
        rows.append({"expected": f"{low_variant} {low_metric} <= {high_variant} {high_metric}",
                     "holds": int((paired["low"] <= paired["high"]).sum()),
                     "compared": len(paired)})
    return pd.DataFrame(rows, columns=["expected", "holds", "compared"])


def direction_table(results: pd.DataFrame) -> Table:
    table = Table(title="Directional checks (seeds holding / seeds compared)")
    table.add_column("expected")
    table.add_column("holds", justify="right")
    for row in direction_counts(results).itertuples(index=False):
        table.add_row(row.expected, f"{row.holds} / {row.compared}")
    return table


def main():
    args = parse_args()
    log_config = load_logging_config()
    logger = CustomLogger(name="ablations", log_dir=log_config.get("log_dir", "logs"),
                          config=log_config).get_logger()
    try:
        out_dir = Path(args.out)
        scene = build_scene(args.scene)
        dataset_dir = out_dir / f"data_{args.scene}"
        if not (dataset_dir / MANIFEST_NAME).exists():
            generate_dataset(scene, args.views, args.res, 0, dataset_dir)

        rows = [run_one(args, variant, seed, dataset_dir, scene, logger)
                for variant in args.variants for seed in args.seeds]
        results = pd.DataFrame(rows)
        results.to_csv(out_dir / "ablations.csv", index=False)

        console = Console()
        console.print(summary_table(results))
        console.print(direction_table(results))
        logger.info(f"Results written to {out_dir / 'ablations.csv'}")
    except Exception as e:
        logger.error(f"Ablation run failed: {str(e)}", exc_info=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
