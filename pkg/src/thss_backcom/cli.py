"""Command-line entry point: run a named scenario and emit its result rows."""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from typing import Any, NoReturn

from fastmcp.utilities.logging import configure_logging, get_logger

from thss_backcom.errors import BackcomError, ConfigError, ScenarioError
from thss_backcom.scenarios import SCENARIOS, emit, parse_sweep, render, run_scenario
from thss_backcom.simulator import default_workers

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_IO = 3


def _scalar(text: str) -> Any:
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_assignments(items: Sequence[str]) -> dict[str, Any]:
    """``KEY=VALUE`` pairs from repeated ``--set`` flags."""
    out: dict[str, Any] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(item, f"--set expects KEY=VALUE, got '{item}'")
        out[key.strip()] = _scalar(value)
    return out


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as one stderr line instead of the usage dump."""

    def error(self, message: str) -> NoReturn:
        key = None
        if message.startswith("argument "):
            key = message.removeprefix("argument ").partition(":")[0].split("/")[-1]
        self.exit(EXIT_ERROR, _error_line("usage", key, message) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="thss-backcom",
        description="Analytic vs Monte Carlo metrics for TH-SS full-duplex backscatter links.",
    )
    parser.add_argument("--config", help="TOML config with [system], [distances], [static_channels]")
    parser.add_argument(
        "--scenario", default="two_link_sync", help=f"one of: {', '.join(sorted(SCENARIOS))}"
    )
    parser.add_argument("--trials", type=int, default=10**6, help="Monte Carlo trials per point")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--sweep",
        action="append",
        default=[],
        metavar="PARAM=START:STOP:STEPS",
        help="swept parameter (rho, N, beta, K, P, E0); at most one",
    )
    parser.add_argument(
        "--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE"
    )
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--workers", type=int, default=None, help="worker processes")
    parser.add_argument(
        "--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR")
    )
    return parser


def _error_line(code: str, key: str | None, message: str) -> str:
    escaped = message.replace('"', "'")
    return f'error code={code} key={key or "-"} message="{escaped}"'


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code is None else int(exc.code)
    configure_logging(level=args.log_level)

    try:
        if len(args.sweep) > 1:
            raise ScenarioError("at most one --sweep per run")
        if args.trials < 1:
            raise ConfigError("trials", f"--trials must be >= 1, got {args.trials}")
        sweep = parse_sweep(args.sweep[0]) if args.sweep else None
        rows = run_scenario(
            args.scenario,
            config_path=args.config,
            overrides=parse_assignments(args.assignments),
            sweep=sweep,
            n_trials=args.trials,
            seed=args.seed,
            workers=args.workers or default_workers(),
        )
        if args.out:
            emit(rows, args.format, args.out)
        else:
            sys.stdout.write(render(rows, args.format))
    except BackcomError as exc:
        print(_error_line(exc.code, getattr(exc, "key", None), str(exc)), file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(_error_line("io", args.out, str(exc)), file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
