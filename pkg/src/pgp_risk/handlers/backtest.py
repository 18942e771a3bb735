import dataclasses
import json
import logging
from pathlib import Path

import pandas as pd

from ..backtest import BacktestReport, run_backtest, split_windows
from .common import guarded, response
from .config import RunConfig, load_run_config
from .forecast import load_prices

logger = logging.getLogger(__name__)

STEP_COLUMNS = ["t", "realized_return", "r_hat", "vol", "var", "es", "exception"]
STEPS_FILE = "backtest.csv"
SUMMARY_FILE = "summary.json"


def write_steps(report: BacktestReport, path: Path) -> Path:
    frame = pd.DataFrame([dataclasses.asdict(step) for step in report.steps], columns=STEP_COLUMNS)
    frame["exception"] = frame["exception"].astype(int)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def build_summary(report: BacktestReport, cfg: RunConfig) -> dict:
    summary = {**report.summary(), "config": {**cfg.to_dict(), **report.config}}
    if cfg.window is not None:
        summary["windows"] = [
            {"from": window.steps[0].t, "to": window.steps[-1].t + 1, **window.summary()}
            for window in split_windows(report, cfg.window, cfg.rejection_rule())
        ]
    return summary


@guarded("backtest")
def handler(event):
    cfg = load_run_config(event)
    series = load_prices(cfg)
    report = run_backtest(
        series,
        cfg.forecast_config(),
        (cfg.eval_from, cfg.eval_to),
        rule=cfg.rejection_rule(),
        jobs=cfg.jobs,
    )

    cfg.out.mkdir(parents=True, exist_ok=True)
    steps_path = write_steps(report, cfg.out / STEPS_FILE)
    summary = build_summary(report, cfg)
    summary_path = cfg.out / SUMMARY_FILE
    summary_path.write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    logger.info(json.dumps({"event": "ReportWritten", "steps": str(steps_path), "summary": str(summary_path)}))
    return response(0, {**summary, "files": {"steps": str(steps_path), "summary": str(summary_path)}})
