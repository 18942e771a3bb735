import datetime
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    DuplicateTimestamp,
    MalformedRow,
    NonPositivePrice,
    SeriesTooShort,
)

logger = logging.getLogger(__name__)

Timestamp = Union[int, datetime.date]

DEFAULT_DATE_COLUMN = "date"
DEFAULT_PRICE_COLUMN = "price"


@dataclass(frozen=True)
class ColumnSpec:
    date: str = DEFAULT_DATE_COLUMN
    price: str = DEFAULT_PRICE_COLUMN


def _freeze(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PriceSeries:
    """Ordered positive prices. Positions (0..n-1) are what the method uses."""

    timestamps: tuple
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "prices", _freeze(self.prices))
        if self.prices.ndim != 1 or len(self.prices) != len(self.timestamps):
            raise DataError("timestamps and prices must be aligned 1-d sequences")
        if len(self.prices) < 2:
            raise SeriesTooShort(f"a price series needs at least 2 observations, got {len(self.prices)}")
        bad = np.flatnonzero(~(self.prices > 0) | ~np.isfinite(self.prices))
        if bad.size:
            index = int(bad[0])
            raise NonPositivePrice(f"price {self.prices[index]!r} at position {index} is not a positive number")
        for index in range(1, len(self.timestamps)):
            if not self.timestamps[index - 1] < self.timestamps[index]:
                raise DuplicateTimestamp(
                    f"timestamps must be strictly increasing: {self.timestamps[index - 1]!r} then "
                    f"{self.timestamps[index]!r} at position {index}"
                )

    @classmethod
    def from_prices(cls, prices: Sequence[float]) -> "PriceSeries":
        return cls(timestamps=tuple(range(len(prices))), prices=prices)

    def __len__(self) -> int:
        return len(self.prices)

    def prefix(self, t: int) -> "PriceSeries":
        """The first t observations; the information known at position t-1."""
        return PriceSeries(self.timestamps[:t], self.prices[:t])

    def scaled(self, a: float, c: float = 0.0) -> "PriceSeries":
        return PriceSeries(self.timestamps, a * self.prices + c)


@dataclass(frozen=True)
class ReturnSeries:
    timestamps: tuple
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "returns", _freeze(self.returns))

    def __len__(self) -> int:
        return len(self.returns)


def _parse_timestamp(raw: str, row: int) -> Timestamp:
    text = raw.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return datetime.date.fromisoformat(text)
    except ValueError:
        raise MalformedRow(f"row {row}: timestamp {raw!r} is neither an integer nor an ISO date") from None


def _parse_price(raw: str, row: int) -> float:
    try:
        value = float(raw.strip())
    except ValueError:
        raise MalformedRow(f"row {row}: price {raw!r} is not a number") from None
    if not math.isfinite(value):
        raise MalformedRow(f"row {row}: price {raw!r} is not finite")
    if value <= 0:
        raise NonPositivePrice(f"row {row}: price {raw.strip()} is not positive")
    return value


def load_csv(path: Union[str, Path], columns: ColumnSpec = ColumnSpec()) -> PriceSeries:
    """Read a `date,price` CSV (header required) into a PriceSeries.

    Rows are numbered from 1 starting at the first data row. Blank rows are
    errors, never skipped; rows are sorted by timestamp after parsing.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise MalformedRow(f"{path}: {exc}") from exc

    missing = [name for name in (columns.date, columns.price) if name not in frame.columns]
    if missing:
        raise MalformedRow(f"{path}: missing column(s) {', '.join(missing)}")

    parsed = []
    for row, (raw_ts, raw_price) in enumerate(zip(frame[columns.date], frame[columns.price]), start=1):
        if not isinstance(raw_ts, str) or not isinstance(raw_price, str) or not raw_ts.strip() or not raw_price.strip():
            raise MalformedRow(f"row {row}: blank or missing field")
        parsed.append((_parse_timestamp(raw_ts, row), _parse_price(raw_price, row), row))

    kinds = {type(ts) for ts, _, _ in parsed}
    if len(kinds) > 1:
        raise MalformedRow(f"{path}: timestamps mix integers and dates")

    parsed.sort(key=lambda item: item[0])
    for previous, current in zip(parsed, parsed[1:]):
        if previous[0] == current[0]:
            raise DuplicateTimestamp(f"row {current[2]}: duplicate timestamp {current[0]} (also row {previous[2]})")

    series = PriceSeries(
        timestamps=tuple(ts for ts, _, _ in parsed),
        prices=[price for _, price, _ in parsed],
    )
    logger.debug(json.dumps({"event": "SeriesLoaded", "path": str(path), "rows": len(series)}))
    return series


def write_csv(series: PriceSeries, path: Union[str, Path], columns: ColumnSpec = ColumnSpec()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            columns.date: [ts.isoformat() if isinstance(ts, datetime.date) else ts for ts in series.timestamps],
            columns.price: series.prices,
        }
    )
    frame.to_csv(path, index=False, float_format="%.10f", lineterminator="\n")
    return path


def to_returns(series: PriceSeries) -> ReturnSeries:
    if len(series) < 2:
        raise SeriesTooShort("returns need at least 2 prices")
    prices = series.prices
    return ReturnSeries(timestamps=series.timestamps[1:], returns=prices[1:] / prices[:-1] - 1.0)


def reconstruct_prices(first_price: float, returns: ReturnSeries) -> np.ndarray:
    return first_price * np.cumprod(np.concatenate(([1.0], 1.0 + returns.returns)))
