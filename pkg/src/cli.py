"""Command-line entry point for the cell-process toolkit."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from components.orchestrator import PipelineOrchestrator
from components.reporter import Reporter
from errors import ConfigError
from utils.config_loader import ConfigLoader


logger = logging.getLogger("cellproc")

COMMANDS = ("validate", "simulate", "drift", "tails", "pde", "compare")
SCENARIOS_DIR = Path(__file__).parent.parent / "scenarios"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellproc",
        description="Simulate and verify growth-fragmentation cell processes",
    )
    parser.add_argument("command", choices=COMMANDS, help="Subcommand to run")
    parser.add_argument(
        "--config",
        type=str,
        required=True,
        help="Path to a TOML run configuration, or the name of a bundled scenario",
    )
    parser.add_argument("--seed", type=int, default=None, help="Override the master seed")
    parser.add_argument("--output-dir", type=str, default=None, help="Override the output directory")
    parser.add_argument(
        "--force",
        action="store_true",
        help="Simulate or solve even when the model is not positive recurrent",
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: INFO)",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    loader = ConfigLoader(str(SCENARIOS_DIR))
    try:
        config = loader.load(args.config, {"seed": args.seed, "output_dir": args.output_dir})
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return e.exit_code

    logger.info(f"loaded config '{config.name}' for {args.command}")
    orchestrator = PipelineOrchestrator()
    result = orchestrator.run(args.command, config, force=args.force)
    print(Reporter.generate_summary(result).strip())
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
