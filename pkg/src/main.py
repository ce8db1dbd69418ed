#!/usr/bin/env python3
"""
Latent-space outlier detection and encoder explanations for univariate time series.
Main entry point that runs one pipeline command per invocation.
"""

import argparse
import os
import sys
from typing import Any, Dict, List, Optional

# Add the parent directory to the path so we can import from sibling packages
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.pipeline import RENDER_KINDS, Pipeline
from src.utils.config_loader import build_pipeline_config, create_default_config, load_config, set_config_value
from src.utils.errors import AEEError, ConfigError
from src.utils.helper_functions import parse_id_list
from src.utils.logger import setup_logger

COMMANDS = ("init-config", "gen", "train", "detect", "explain", "aee", "qm", "render", "report", "search", "run")


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(
        description="Detect whole-series outliers in autoencoder latent space and explain the encoder"
    )

    parser.add_argument("--config", type=str, default="config.yaml",
                        help="Path to configuration file")
    parser.add_argument("--seed", type=int,
                        help="Master seed (overrides master_seed)")
    parser.add_argument("--output-dir", type=str,
                        help="Output directory (overrides paths.output_dir and AEE_OUTPUT_DIR)")
    parser.add_argument("--log-level", type=str,
                        help="Log level (DEBUG, INFO, WARNING, ERROR)")

    subparsers = parser.add_subparsers(dest="command", required=True)
    init = subparsers.add_parser("init-config", help="Write the default configuration to --config")
    init.add_argument("--force", action="store_true", help="Overwrite an existing file")
    subparsers.add_parser("gen", help="Generate the synthetic corpus")

    train = subparsers.add_parser("train", help="Train the autoencoder")
    train.add_argument("--epochs", type=int, help="Training epochs")

    search = subparsers.add_parser("search", help="Random architecture search")
    search.add_argument("--trials", type=int, help="Sampled architectures")
    search.add_argument("--epochs", type=int, help="Epochs per trial")

    detect = subparsers.add_parser("detect", help="Flag latent outliers with DBSCAN")
    detect.add_argument("--split", choices=("train", "validation", "test", "all"),
                        help="Split to run detection on")
    detect.add_argument("--eps", type=float, help="DBSCAN radius (k-distance elbow when omitted)")
    detect.add_argument("--min-pts", type=int, help="DBSCAN core threshold")

    explain = subparsers.add_parser("explain", help="Explain encoder outputs")
    explain.add_argument("--method", type=str, help="Comma-separated explainers (gradcam,lime,shap,lrp)")
    explain.add_argument("--target", type=str, help="combined or a latent index")
    explain.add_argument("--ids", type=str, help="Comma-separated series ids")

    aee = subparsers.add_parser("aee", help="Aggregate explanations")
    aee.add_argument("--method", type=str, help="Comma-separated member methods")
    aee.add_argument("--target", type=str, help="combined or a latent index")

    qm = subparsers.add_parser("qm", help="Quality measurement of explanations")
    qm.add_argument("--method", type=str, help="Comma-separated methods (default: all plus aee)")
    qm.add_argument("--target", type=str, help="combined or a latent index")

    render = subparsers.add_parser("render", help="Render SVG figures")
    render.add_argument("--kind", choices=RENDER_KINDS, required=True, help="Figure kind")
    render.add_argument("--target", type=str, help="combined, a latent index, or features")
    render.add_argument("--ids", type=str, help="Comma-separated series ids")
    render.add_argument("--method", type=str, help="Comma-separated methods")

    subparsers.add_parser("report", help="Assemble the run report")

    run = subparsers.add_parser("run", help="Run the whole pipeline")
    run.add_argument("--epochs", type=int, help="Training epochs")

    return parser.parse_args(argv)


def update_config_with_args(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """Update configuration with command-line arguments; flags win over file and environment."""
    if args.seed is not None:
        config = set_config_value(config, "master_seed", args.seed)

    if args.output_dir:
        config = set_config_value(config, "paths.output_dir", args.output_dir)

    if args.log_level:
        config = set_config_value(config, "log_level", args.log_level)

    epochs = getattr(args, "epochs", None)
    if epochs is not None:
        key = "search.epochs" if args.command == "search" else "autoencoder.training.epochs"
        config = set_config_value(config, key, epochs)

    if getattr(args, "trials", None) is not None:
        config = set_config_value(config, "search.trials", args.trials)

    if getattr(args, "eps", None) is not None:
        config = set_config_value(config, "dbscan.eps", args.eps)

    if getattr(args, "min_pts", None) is not None:
        config = set_config_value(config, "dbscan.min_pts", args.min_pts)

    return config


def dispatch(pipeline: Pipeline, args: argparse.Namespace):
    """Run the selected command."""
    methods = parse_id_list(getattr(args, "method", None)) or None
    ids = parse_id_list(getattr(args, "ids", None)) or None
    target = getattr(args, "target", None)

    commands = {
        "gen": pipeline.cmd_gen,
        "train": pipeline.cmd_train,
        "search": pipeline.cmd_search,
        "detect": lambda: pipeline.cmd_detect(args.split),
        "explain": lambda: pipeline.cmd_explain(methods, target, ids),
        "aee": lambda: pipeline.cmd_aee(target, methods),
        "qm": lambda: pipeline.cmd_qm(methods, target),
        "render": lambda: pipeline.cmd_render(args.kind, target, ids, methods),
        "report": pipeline.cmd_report,
        "run": pipeline.cmd_run,
    }
    return commands[args.command]()


def init_config(config_path: str, force: bool = False) -> int:
    """Write the default configuration file; refuses to overwrite unless forced."""
    try:
        if os.path.exists(config_path) and not force:
            raise ConfigError(f"{config_path} already exists (use --force to overwrite)")
        create_default_config(config_path)
    except AEEError as e:
        print(f"[{e.category}] {e}", file=sys.stderr)
        return e.exit_code
    print(f"Default configuration written to {config_path}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Main function: load configuration, set up logging, run one command."""
    args = parse_arguments(argv)

    if args.command == "init-config":
        return init_config(args.config, args.force)

    try:
        raw = update_config_with_args(load_config(args.config), args)
        config = build_pipeline_config(raw)
    except FileNotFoundError as e:
        print(f"Configuration file not found: {e}", file=sys.stderr)
        return 3
    except AEEError as e:
        print(f"[{e.category}] {e}", file=sys.stderr)
        return e.exit_code

    logger = setup_logger(config.paths.log_directory, config.log_level, command=args.command)
    logger.info(f"Starting command {args.command}")

    try:
        dispatch(Pipeline(config), args)
    except AEEError as e:
        logger.error(f"[{e.category}] {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"An error occurred: {str(e)}")
        return 1

    logger.info(f"Command {args.command} completed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
