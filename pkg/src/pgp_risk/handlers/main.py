import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from . import backtest, config, forecast, synth, verify

logger = logging.getLogger(__name__)

COMMANDS = {
    "forecast": forecast.handler,
    "backtest": backtest.handler,
    "synth": synth.handler,
    "verify": verify.handler,
    "config": config.handler,
}


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--input", help="price CSV; the bundled sample when omitted")
    parser.add_argument("--date-column", dest="date_column", help="date column of --input (date)")
    parser.add_argument("--price-column", dest="price_column", help="price column of --input (price)")
    parser.add_argument("--window-len", dest="window_len", type=int, help="pattern length l (PGP_RISK_WINDOW_LEN, 10)")
    parser.add_argument("--neighbors", type=int, help="nearest patterns k (PGP_RISK_NEIGHBORS, 25)")
    parser.add_argument("--alpha", type=float, help="VaR/ES level (PGP_RISK_ALPHA, 0.01)")
    parser.add_argument("--from", dest="eval_from", type=int, help="first evaluated position")
    parser.add_argument("--to", dest="eval_to", type=int, help="end of the evaluated range, exclusive")
    parser.add_argument("--out", help="output directory (PGP_RISK_OUT, ./out)")
    parser.add_argument("--seed", type=int, help="seed for synthetic series")
    parser.add_argument("--warm-start", dest="warm_start", action="store_true", help="start each fit from the previous step")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="optimizer iterations per start")
    parser.add_argument(
        "--length-floor",
        dest="length_floor",
        type=float,
        help="length scales stay above this multiple of the neighbour spread; 0 disables (PGP_RISK_LENGTH_FLOOR, 2.0)",
    )
    parser.add_argument("--jobs", type=int, help="worker processes (PGP_RISK_JOBS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgp-risk", description="Piecewise GP price forecasts with VaR/ES backtesting.")
    commands = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(commands.add_parser("forecast", help="one-step forecast for the end of the series"))

    backtest_parser = commands.add_parser("backtest", help="rolling forecasts with exception counting")
    _add_run_flags(backtest_parser)
    backtest_parser.add_argument("--window", type=int, help="also summarize consecutive windows of this many steps")
    backtest_parser.add_argument("--confidence", type=float, help="binomial test confidence (0.95)")

    synth_parser = commands.add_parser("synth", help="write a seeded synthetic price series")
    _add_run_flags(synth_parser)
    synth_parser.add_argument("--kind", help="random-walk or regime-switch")
    synth_parser.add_argument("--length", type=int, help="number of prices (1000)")

    verify_parser = commands.add_parser("verify", help="run the reference-implementation checks")
    verify_parser.add_argument("--full", action="store_true", help="full grids and the forecaster calibration run")
    verify_parser.add_argument("--jobs", type=int, help="worker processes (PGP_RISK_JOBS)")

    _add_run_flags(commands.add_parser("config", help="print the effective configuration"))
    return parser


def configure_logging():
    level_name = os.getenv("PGP_RISK_LOG_LEVEL", "INFO").upper()
    level = getattr(logging, level_name, None)
    logging.basicConfig(stream=sys.stderr, format="%(message)s", level=level if isinstance(level, int) else logging.INFO)


def handler(event: dict) -> dict:
    command = event.get("command")
    if command in COMMANDS:
        return COMMANDS[command](event)
    logger.info(json.dumps({"event": "CommandNotFound", "command": command}))
    return {"exitCode": 2, "body": json.dumps({"error": "Not found", "command": command})}


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    result = handler(vars(args))
    print(result["body"])
    return result["exitCode"]
