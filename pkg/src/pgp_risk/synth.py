"""Seeded synthetic price series for tests, demos and calibration runs."""

import numpy as np

from .series_ingest import PriceSeries

KINDS = ("random-walk", "regime-switch")

START_PRICE = 100.0
CALM_VOL = 0.01
REGIME_VOLS = (0.005, 0.025)
SWITCH_PROB = 0.01


def random_walk(length: int, seed: int, vol: float = CALM_VOL) -> np.ndarray:
    """Gaussian random walk in log price."""
    rng = np.random.default_rng(seed)
    steps = vol * rng.standard_normal(length - 1)
    return START_PRICE * np.exp(np.concatenate(([0.0], np.cumsum(steps))))


def regime_switch(length: int, seed: int) -> np.ndarray:
    """Log-price walk whose volatility flips between a calm and a turbulent regime."""
    rng = np.random.default_rng(seed)
    switches = rng.random(length - 1) < SWITCH_PROB
    regime = np.cumsum(switches) % 2
    vols = np.asarray(REGIME_VOLS)[regime]
    steps = vols * rng.standard_normal(length - 1)
    return START_PRICE * np.exp(np.concatenate(([0.0], np.cumsum(steps))))


def generate(kind: str, length: int, seed: int) -> PriceSeries:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    if length < 2:
        raise ValueError("length must be >= 2")
    prices = random_walk(length, seed) if kind == "random-walk" else regime_switch(length, seed)
    return PriceSeries(timestamps=tuple(range(1, length + 1)), prices=prices)
