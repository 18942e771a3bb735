"""Standardized behavior patterns and nearest-pattern training sets.

Positions are 0-based: for a prefix of length t the query window starts at
t - l and candidate windows start at 0..t-l-1, so each candidate's next
value (position start + l) is inside the prefix.
"""

import json
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateWindow, InsufficientHistory
from .series_ingest import PriceSeries

logger = logging.getLogger(__name__)

DEGENERACY_RTOL = 1e-12


def _degeneracy_threshold(mean):
    return DEGENERACY_RTOL * np.maximum(1.0, np.abs(mean))


@dataclass(frozen=True)
class Pattern:
    values: np.ndarray
    source_start: int
    window_mean: float
    window_std: float

    def __len__(self) -> int:
        return len(self.values)


def _pattern(values, source_start, mean, std) -> Pattern:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return Pattern(values=values, source_start=int(source_start), window_mean=float(mean), window_std=float(std))


def standardize_window(prices: Sequence[float], source_start: int = 0) -> Pattern:
    window = np.asarray(prices, dtype=float)
    if window.ndim != 1 or len(window) < 2:
        raise ValueError("a window needs at least 2 prices")
    mean = window.mean()
    std = window.std(ddof=1)
    if std <= _degeneracy_threshold(mean):
        raise DegenerateWindow(f"window starting at {source_start} has std {std!r} (mean {mean!r})")
    return _pattern((window - mean) / std, source_start, mean, std)


def pattern_distance(a: Pattern, b: Pattern) -> float:
    if len(a) != len(b):
        raise ValueError(f"pattern lengths differ: {len(a)} vs {len(b)}")
    return float(np.linalg.norm(a.values - b.values))


@dataclass(frozen=True)
class TrainingSet:
    """The k nearest patterns, their standardized next values and the query."""

    inputs: tuple
    targets: np.ndarray
    query: Pattern
    distances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        targets = np.array(self.targets, dtype=float)
        distances = np.array(self.distances, dtype=float)
        targets.setflags(write=False)
        distances.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "distances", distances)
        if not (len(self.inputs) == len(targets) == len(distances)):
            raise ValueError("inputs, targets and distances must have the same length")

    @classmethod
    def from_arrays(cls, inputs, targets, query) -> "TrainingSet":
        """Training set over raw standardized vectors, ordered as given."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        query = np.asarray(query, dtype=float)
        patterns = tuple(_pattern(row, i, 0.0, 1.0) for i, row in enumerate(inputs))
        return cls(
            inputs=patterns,
            targets=targets,
            query=_pattern(query, len(inputs), 0.0, 1.0),
            distances=np.linalg.norm(inputs - query, axis=1),
        )

    @property
    def k(self) -> int:
        return len(self.inputs)

    @cached_property
    def X(self) -> np.ndarray:
        return np.vstack([p.values for p in self.inputs])

    @property
    def neighbor_starts(self) -> list[int]:
        return [p.source_start for p in self.inputs]


def _as_prices(prices) -> np.ndarray:
    if isinstance(prices, PriceSeries):
        return prices.prices
    return np.asarray(prices, dtype=float)


def build_training_set(prices, window_len: int, neighbors: int) -> TrainingSet:
    values = _as_prices(prices)
    t, l = len(values), window_len
    if l < 2:
        raise ValueError("window_len must be >= 2")
    if neighbors < 1:
        raise ValueError("neighbors must be >= 1")
    if t < 2 * l:
        raise InsufficientHistory(f"prefix of length {t} is shorter than 2*window_len={2 * l}")

    windows = sliding_window_view(values, l)
    means = windows.mean(axis=1)
    stds = windows.std(axis=1, ddof=1)

    query_start = t - l
    query = standardize_window(windows[query_start], source_start=query_start)

    candidate_means = means[:query_start]
    candidate_stds = stds[:query_start]
    usable = candidate_stds > _degeneracy_threshold(candidate_means)
    starts = np.flatnonzero(usable)
    if len(starts) < neighbors:
        raise InsufficientHistory(
            f"only {len(starts)} non-degenerate candidate windows for neighbors={neighbors} "
            f"(prefix length {t}, window_len {l})"
        )

    patterns = (windows[starts] - candidate_means[starts, None]) / candidate_stds[starts, None]
    distances = np.linalg.norm(patterns - query.values, axis=1)
    # stable sort keeps ties in increasing start order
    order = np.argsort(distances, kind="stable")[:neighbors]
    chosen = starts[order]

    inputs = tuple(
        _pattern(patterns[i], starts[i], candidate_means[starts[i]], candidate_stds[starts[i]]) for i in order
    )
    targets = (values[chosen + l] - candidate_means[chosen]) / candidate_stds[chosen]

    logger.debug(
        json.dumps(
            {
                "event": "TrainingSetBuilt",
                "t": t,
                "windowLen": l,
                "neighbors": neighbors,
                "candidates": int(len(starts)),
                "nearest": float(distances[order[0]]),
            }
        )
    )
    return TrainingSet(inputs=inputs, targets=targets, query=query, distances=distances[order])
