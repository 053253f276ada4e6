# SPDX-License-Identifier: GPL-3.0-only

import argparse
import sys
from typing import List, Optional

from numpy.linalg import LinAlgError
from pydantic import ValidationError

from commands.pipeline import (
    cmd_bounds,
    cmd_compare,
    cmd_englobe,
    cmd_predict,
    cmd_simulate,
    cmd_validate,
    load_config,
)
from exceptions import ConfigError, NumericalError, PipelineError
from logutils import get_logger, set_level

logger = get_logger(__name__)

COMMANDS = {
    "simulate": cmd_simulate,
    "predict": cmd_predict,
    "englobe": cmd_englobe,
    "bounds": cmd_bounds,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmview",
        description="Predictive multiview embedding: forecasts and model-reality tests.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(handler.__doc__ or "").strip().splitlines()[0])
        sub.add_argument("--config", required=True, help="JSON run configuration")
        sub.add_argument("--seed", type=int, help="override the master seed")
        sub.add_argument("--out", dest="output_dir", help="override the output directory")
        sub.add_argument("--threads", type=int, help="worker threads (speed only)")
        sub.add_argument("--log-level", help="override LOG_LEVEL, e.g. DEBUG")
    return parser


def validation_message(exc: ValidationError) -> str:
    first_error = exc.errors()[0]
    field = " ".join(str(loc) for loc in first_error["loc"])
    message = first_error.get("msg", "Invalid input")
    return f"{field}, {message}" if field else message


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    try:
        if args.log_level:
            try:
                set_level(args.log_level)
            except ValueError as e:
                raise ConfigError(str(e), key="--log-level") from None
        cfg = load_config(
            args.config,
            {"seed": args.seed, "output_dir": args.output_dir, "threads": args.threads},
        )
        result = COMMANDS[args.command](cfg)
    except ValidationError as exc:
        error_message = validation_message(exc)
        logger.error(error_message)
        print(f"error: {error_message}", file=sys.stderr)
        return ConfigError.exit_code
    except PipelineError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (LinAlgError, FloatingPointError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except Exception as exc:
        logger.exception(exc)
        print("error: Oops! Something went wrong. See the log for details.", file=sys.stderr)
        return 1

    print(result.message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
