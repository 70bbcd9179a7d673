# src/gs_compositor/main.py
"""Command-line entry point: ``gs-compositor <command> [options]``"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import structlog
from dotenv import load_dotenv

from .__version__ import __version__
from .business.services.diagnostics_service import run_grad_checks, run_hilbert_bench
from .business.services.evaluation_service import evaluate
from .business.services.harmonize_service import harmonize, render_scene
from .business.services.scene_service import fit_dataset_scenes
from .business.services.training_service import train_stage1, train_stage2
from .config.settings import PipelineConfig, config_manager
from .core.errors import CompositorError, ConfigError
from .core.logging import setup_logging
from .synthkit.dataset import load_dataset, make_dataset

logger = structlog.get_logger()


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="pipeline configuration JSON")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads for per-view work")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gs-compositor", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("make-dataset", help="generate a synthetic composite dataset")
    _common(p)
    p.add_argument("--scenes", type=int, default=4)
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--holdout", type=int, default=0, help="held-out views per scene")

    p = commands.add_parser("fit-scene", help="fit Gaussian scenes to dataset scenes")
    _common(p)
    p.add_argument("--dataset", type=Path)
    p.add_argument("--scene", action="append", dest="scenes", help="scene id (repeatable)")

    p = commands.add_parser("train-2d", help="train the per-view compositing model")
    _common(p)
    p.add_argument("--dataset", type=Path)

    p = commands.add_parser("train-3d", help="train the Gaussian-grid model")
    _common(p)
    p.add_argument("--dataset", type=Path)
    p.add_argument("--stage1", type=Path, help="stage-1 checkpoint")
    p.add_argument("--scenes-dir", type=Path, help="cache directory for fitted scenes")

    p = commands.add_parser("harmonize", help="harmonize a fitted scene and render its views")
    _common(p)
    p.add_argument("--scene-dir", type=Path, required=True, help="fit-scene output directory")
    p.add_argument("--stage1", type=Path)
    p.add_argument("--stage2", type=Path)
    p.add_argument("--camera", action="append", dest="cameras", default=[], type=Path,
                   help="extra camera JSON (repeatable)")
    p.add_argument("--identity-oracle", action="store_true",
                   help="replace the grid model by a copy of the input colors")
    p.add_argument("--background", type=Path, dest="background_dir",
                   help="directory of <view>.pfm background images for the 2D model")

    p = commands.add_parser("render", help="render a scene JSON from camera JSONs")
    _common(p)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--camera", action="append", dest="cameras", required=True, type=Path)

    p = commands.add_parser("eval", help="PSNR/SSIM of predicted views against ground truth")
    _common(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--masks", type=Path, help="directory with <view>/mask.ppm")

    p = commands.add_parser("grad-check", help="verify every analytic backward")
    _common(p)

    p = commands.add_parser("hilbert-bench", help="locality of point orderings")
    _common(p)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--order", type=int, default=10)
    return parser


def _resolve(value: Optional[Path], fallback: Optional[Path], what: str) -> Path:
    path = value or fallback
    if path is None:
        raise ConfigError(f"{what} is not set (flag or configuration)")
    return path


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = config_manager.load(args.config)
    config = config.with_overrides(seed=args.seed, threads=args.threads)
    data = config.data.model_copy(update={
        k: v for k, v in {
            "dataset_dir": getattr(args, "dataset", None),
            "scenes_dir": getattr(args, "scenes_dir", None),
            "stage1_checkpoint": getattr(args, "stage1", None),
            "stage2_checkpoint": getattr(args, "stage2", None),
        }.items() if v is not None
    })
    config = config.model_copy(update={"data": data})
    config_manager.set(config)
    return config


def cmd_make_dataset(config: PipelineConfig, args) -> None:
    make_dataset(
        args.scenes, args.views, config.seed, args.out,
        synth=config.synth, n_holdout=args.holdout, threads=config.threads,
    )


def cmd_fit_scene(config: PipelineConfig, args) -> None:
    dataset = _resolve(args.dataset, config.data.dataset_dir, "dataset")
    fit_dataset_scenes(config, dataset, args.out, scene_ids=args.scenes)


def cmd_train_2d(config: PipelineConfig, args) -> None:
    dataset = load_dataset(_resolve(args.dataset, config.data.dataset_dir, "dataset"))
    train_stage1(config, dataset, args.out)


def cmd_train_3d(config: PipelineConfig, args) -> None:
    dataset = load_dataset(_resolve(args.dataset, config.data.dataset_dir, "dataset"))
    stage1 = _resolve(args.stage1, config.data.stage1_checkpoint, "stage-1 checkpoint")
    train_stage2(config, dataset, stage1, args.out)


def cmd_harmonize(config: PipelineConfig, args) -> None:
    stage1 = _resolve(args.stage1, config.data.stage1_checkpoint, "stage-1 checkpoint")
    stage2 = None
    if not args.identity_oracle:
        stage2 = _resolve(args.stage2, config.data.stage2_checkpoint, "stage-2 checkpoint")
    harmonize(
        config, stage1, stage2, args.scene_dir, args.out,
        camera_paths=args.cameras, identity_oracle=args.identity_oracle,
        background_dir=args.background_dir,
    )


def cmd_render(config: PipelineConfig, args) -> None:
    render_scene(args.scene, args.cameras, args.out, threads=config.threads)


def cmd_eval(config: PipelineConfig, args) -> None:
    evaluate(args.pred, args.gt, out_path=args.out / "metrics.json", mask_dir=args.masks)


def cmd_grad_check(config: PipelineConfig, args) -> None:
    run_grad_checks(seed=config.seed, out_path=args.out / "grad_check.json")


def cmd_hilbert_bench(config: PipelineConfig, args) -> None:
    run_hilbert_bench(
        n_points=args.points, seed=config.seed, p=args.order,
        out_path=args.out / "hilbert_bench.json",
    )


COMMANDS: Dict[str, Callable[[PipelineConfig, argparse.Namespace], None]] = {
    "make-dataset": cmd_make_dataset,
    "fit-scene": cmd_fit_scene,
    "train-2d": cmd_train_2d,
    "train-3d": cmd_train_3d,
    "harmonize": cmd_harmonize,
    "render": cmd_render,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "hilbert-bench": cmd_hilbert_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns 0, or 2/3/4 for config, data and numerical errors"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    # MVCL_LOG governs until the configuration is read
    setup_logging()
    try:
        config = _load_config(args)
        setup_logging(
            level=config.logging.level,
            log_file=config.logging.log_file,
            max_bytes=config.logging.max_file_size,
            backup_count=config.logging.backup_count,
        )
        COMMANDS[args.command](config, args)
    except CompositorError as e:
        logger.error("Command failed", command=args.command, error=str(e), exit_code=e.exit_code)
        return e.exit_code
    logger.info("Command finished", command=args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
