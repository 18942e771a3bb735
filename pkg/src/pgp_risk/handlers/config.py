import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..backtest import RejectionRule, default_jobs
from ..errors import ConfigError
from ..forecaster import (
    DEFAULT_ALPHA,
    DEFAULT_LENGTH_CEILING,
    DEFAULT_LENGTH_FLOOR,
    DEFAULT_NEIGHBORS,
    DEFAULT_WINDOW_LEN,
    ForecastConfig,
    forecast_optimizer,
)
from ..series_ingest import DEFAULT_DATE_COLUMN, DEFAULT_PRICE_COLUMN, ColumnSpec
from .common import guarded, response


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}", details=[f"{name} must be an integer"]) from None


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}", details=[f"{name} must be a number"]) from None


@dataclass(frozen=True)
class RunConfig:
    input: Optional[Path] = None
    window_len: int = DEFAULT_WINDOW_LEN
    neighbors: int = DEFAULT_NEIGHBORS
    alpha: float = DEFAULT_ALPHA
    eval_from: Optional[int] = None
    eval_to: Optional[int] = None
    out: Path = Path("out")
    seed: int = 0
    warm_start: bool = False
    max_iter: int = 200
    jobs: int = 1
    window: Optional[int] = None
    confidence: float = 0.95
    # 0 turns the length-scale floor off
    length_floor: float = DEFAULT_LENGTH_FLOOR
    date_column: str = DEFAULT_DATE_COLUMN
    price_column: str = DEFAULT_PRICE_COLUMN

    def forecast_config(self) -> ForecastConfig:
        return ForecastConfig(
            window_len=self.window_len,
            neighbors=self.neighbors,
            alpha=self.alpha,
            optimizer=forecast_optimizer(
                max_iter=self.max_iter,
                warm_start=self.warm_start,
                length_floor=self.length_floor or None,
            ),
        )

    def columns(self) -> ColumnSpec:
        return ColumnSpec(date=self.date_column, price=self.price_column)

    def rejection_rule(self) -> RejectionRule:
        return RejectionRule(confidence=self.confidence)

    def to_dict(self) -> dict:
        """Everything that affects results; `jobs` is left out since it never does."""
        return {
            "input": str(self.input) if self.input else "bundled:sample_prices",
            "window_len": self.window_len,
            "neighbors": self.neighbors,
            "alpha": self.alpha,
            "from": self.eval_from,
            "to": self.eval_to,
            "seed": self.seed,
            "warm_start": self.warm_start,
            "max_iter": self.max_iter,
            "window": self.window,
            "confidence": self.confidence,
            "length_floor": self.length_floor,
            "date_column": self.date_column,
            "price_column": self.price_column,
        }


def _pick(event: dict, key: str, fallback):
    value = event.get(key)
    return fallback if value is None else value


def load_run_config(event: dict) -> RunConfig:
    """Resolve flags over PGP_RISK_* environment variables over defaults."""
    window_len = _pick(event, "window_len", _env_int("PGP_RISK_WINDOW_LEN", DEFAULT_WINDOW_LEN))
    neighbors = _pick(event, "neighbors", _env_int("PGP_RISK_NEIGHBORS", DEFAULT_NEIGHBORS))
    alpha = _pick(event, "alpha", _env_float("PGP_RISK_ALPHA", DEFAULT_ALPHA))
    jobs = _pick(event, "jobs", _env_int("PGP_RISK_JOBS", default_jobs()))
    out = Path(_pick(event, "out", os.getenv("PGP_RISK_OUT", "out")))
    input_path = event.get("input")

    errors = []
    if window_len < 2:
        errors.append("window_len must be >= 2")
    if neighbors < 1:
        errors.append("neighbors must be >= 1")
    if not 0.0 < alpha < 1.0:
        errors.append("alpha must lie in (0, 1)")
    if jobs < 1:
        errors.append("jobs must be >= 1")
    max_iter = _pick(event, "max_iter", 200)
    if max_iter < 1:
        errors.append("max_iter must be >= 1")
    window = event.get("window")
    if window is not None and window < 1:
        errors.append("window must be >= 1")
    confidence = _pick(event, "confidence", 0.95)
    if not 0.0 < confidence < 1.0:
        errors.append("confidence must lie in (0, 1)")
    length_floor = _pick(event, "length_floor", _env_float("PGP_RISK_LENGTH_FLOOR", DEFAULT_LENGTH_FLOOR))
    if not (math.isfinite(length_floor) and 0.0 <= length_floor < DEFAULT_LENGTH_CEILING):
        errors.append(f"length_floor must lie in [0, {DEFAULT_LENGTH_CEILING:g})")
    date_column = _pick(event, "date_column", DEFAULT_DATE_COLUMN)
    price_column = _pick(event, "price_column", DEFAULT_PRICE_COLUMN)
    if not date_column or not price_column or date_column == price_column:
        errors.append("date_column and price_column must be distinct, non-empty names")
    if input_path is not None and not Path(input_path).is_file():
        errors.append(f"input {input_path} is not a readable file")
    if errors:
        raise ConfigError("invalid configuration: " + "; ".join(errors), details=errors)

    return RunConfig(
        input=Path(input_path) if input_path is not None else None,
        window_len=window_len,
        neighbors=neighbors,
        alpha=alpha,
        eval_from=event.get("eval_from"),
        eval_to=event.get("eval_to"),
        out=out,
        seed=_pick(event, "seed", 0),
        warm_start=bool(event.get("warm_start")),
        max_iter=max_iter,
        jobs=jobs,
        window=window,
        confidence=confidence,
        length_floor=length_floor,
        date_column=date_column,
        price_column=price_column,
    )


@guarded("config")
def handler(event):
    cfg = load_run_config(event)
    return response(0, {**cfg.to_dict(), "jobs": cfg.jobs, "out": str(cfg.out)})
