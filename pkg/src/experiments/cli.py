"""Command-line entry point: lipschitz-gluing <command> --config <path>"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv

from src.experiments.config import STAGES, ExperimentSettings, load_config
from src.experiments.pipeline import run, sweep, verify_lemmas

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "config/config.yaml"
COMMAND_STAGES: Dict[str, Sequence[str]] = {
    "net": ("admissibility", "net", "correspondence"),
    "charts": ("charts",),
    "glue": ("partition", "glue"),
    "measure": ("measure",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipschitz-gluing",
        description="Glue local charts between Gromov-Hausdorff close manifolds and measure the result",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    helps = {
        "net": "build and validate the net and the correspondence",
        "charts": "construct and check local charts",
        "glue": "build the partition of unity and evaluate the glued map",
        "measure": "measure distortion, differential and injectivity of the glued map",
        "verify-lemmas": "run the comparison, linear-algebra and partition checks",
        "report": "run every configured stage",
        "sweep": "run the pipeline over the sweep deltas and fit trends",
    }
    for name, text in helps.items():
        command = commands.add_parser(name, help=text)
        command.add_argument("--config", default=DEFAULT_CONFIG, help="experiment YAML or JSON file")
        command.add_argument("--out", default=None, help="output directory (default LIPSCHITZ_OUTPUT_DIR)")
        command.add_argument("--seed", type=int, default=None, help="override the net, sampling and trial seeds")
        command.add_argument(
            "--stage", action="append", choices=STAGES, default=None, help="run only this stage (repeatable)"
        )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command

    Returns:
        0 when every selected stage succeeded and passed its checks, 1 otherwise
    """
    load_dotenv()
    settings = ExperimentSettings()
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO))
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.command == "sweep":
            result = sweep(config, output_dir=args.out, settings=settings)
            return 0 if result.passed else 1
        if args.command == "verify-lemmas" and args.stage is None:
            report = verify_lemmas(config, output_dir=args.out, settings=settings)
        else:
            stages = args.stage or COMMAND_STAGES.get(args.command)
            report = run(config, stages=stages, output_dir=args.out, settings=settings)
    except Exception as e:
        logger.error(f"Error running {args.command}: {e}")
        return 1
    for stage in report.stages:
        logger.info(f"{stage.name}: {stage.status}{'' if stage.passed else ' (checks failed)'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
