import json
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError
from .gp_core import GpHyperparams, OptimizerSettings, fit_multistart, posterior
from .pattern_index import build_training_set
from .risk_measures import PredictiveDistribution, RiskForecast, risk_forecast
from .series_ingest import PriceSeries

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_LEN = 10
DEFAULT_NEIGHBORS = 25
DEFAULT_ALPHA = 0.01
# forecast length scales stay within these multiples of the neighbour-set spread
DEFAULT_LENGTH_FLOOR = 2.0
DEFAULT_LENGTH_CEILING = 100.0
FLOORED_RESTART_SCALES = (1.0, 3.0, 10.0)


def forecast_optimizer(**overrides) -> OptimizerSettings:
    """Optimizer settings used for price forecasts."""
    settings = {
        "length_floor": DEFAULT_LENGTH_FLOOR,
        "length_ceiling": DEFAULT_LENGTH_CEILING,
        "restart_scales": FLOORED_RESTART_SCALES,
    }
    settings.update(overrides)
    return OptimizerSettings(**settings)


@dataclass(frozen=True)
class ForecastConfig:
    window_len: int = DEFAULT_WINDOW_LEN
    neighbors: int = DEFAULT_NEIGHBORS
    alpha: float = DEFAULT_ALPHA
    optimizer: OptimizerSettings = field(default_factory=forecast_optimizer)

    def __post_init__(self):
        errors = []
        if not isinstance(self.window_len, int) or self.window_len < 2:
            errors.append("window_len must be an integer >= 2")
        if not isinstance(self.neighbors, int) or self.neighbors < 1:
            errors.append("neighbors must be an integer >= 1")
        if not (isinstance(self.alpha, (int, float)) and 0.0 < self.alpha < 1.0):
            errors.append("alpha must lie in (0, 1)")
        if errors:
            raise ConfigError("invalid forecast configuration", details=errors)

    @property
    def min_history(self) -> int:
        """Shortest prefix that has a query window and `neighbors` candidates."""
        return self.window_len + max(self.window_len, self.neighbors)

    def to_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "neighbors": self.neighbors,
            "alpha": self.alpha,
            "optimizer": self.optimizer.to_dict(),
        }


class OneStepForecast(NamedTuple):
    distribution: PredictiveDistribution
    risk: RiskForecast
    hyperparams: GpHyperparams


def forecast_one_step(prices, cfg: ForecastConfig, warm: Optional[GpHyperparams] = None) -> OneStepForecast:
    """Forecast the price after the last one in `prices` and its VaR/ES."""
    values = prices.prices if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=float)
    ts = build_training_set(values, cfg.window_len, cfg.neighbors)
    hp, _ = fit_multistart(ts, cfg.optimizer, warm=warm)
    post = posterior(ts, hp)

    scale = ts.query.window_std
    distribution = PredictiveDistribution(
        price_mean=scale * post.mean + ts.query.window_mean,
        price_std=scale * math.sqrt(post.variance),
        last_price=float(values[-1]),
    )
    risk = risk_forecast(distribution, cfg.alpha)
    logger.debug(
        json.dumps(
            {
                "event": "ForecastIssued",
                "t": len(values),
                "vHat": distribution.price_mean,
                "sigmaHat": distribution.price_std,
                "var": risk.var_alpha,
                "es": risk.es_alpha,
            }
        )
    )
    return OneStepForecast(distribution, risk, hp)
