"""Command-line entry point: ``subopt-lfd <stage|pipeline> --config FILE``.

Exit codes: 0 on success, 1 when the arguments, the config or an input
artifact fail validation, 2 on any other runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .pipeline import STAGES, ConfigError, InputError, PipelineConfig, run_pipeline, run_stage, version_string

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation failures, so they exit with ``EXIT_INVALID``."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="subopt-lfd",
        description="Reward learning from suboptimal demonstrations: pipeline stages and grid runner.",
    )
    parser.add_argument("--version", action="version", version=f"subopt-lfd {version_string()}")
    parser.add_argument("command", choices=[*STAGES, "pipeline"],
                        help="a single stage, or 'pipeline' for the full generator x learner grid")
    parser.add_argument("--config", required=True, type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="root seed for a single stage (default: first seed in the config)")
    parser.add_argument("--out", type=Path, default=None,
                        help="artifact directory (default: the config's 'out', else the current directory)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logs")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config)
        out = args.out or Path(cfg.out or ".")
        if args.command == "pipeline":
            result = run_pipeline(cfg, out)
            for path in result["paths"]:
                print(path)
            failed = [c for c in result["cells"] if c["status"] != "ok"]
            for c in failed:
                print(f"failed cell {c['generator']}/{c['learner']} seed {c['seed']}: {c['error']}",
                      file=sys.stderr)
            return EXIT_RUNTIME if failed else EXIT_OK
        seed = cfg.seeds[0] if args.seed is None else args.seed
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        for path in run_stage(args.command, cfg, seed, out):
            print(path)
        return EXIT_OK
    except (ConfigError, InputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # anything else is a runtime failure
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
