import json
import logging

from ..errors import ConfigError
from ..forecaster import forecast_one_step
from ..samples import load_sample
from ..series_ingest import load_csv
from .common import guarded, response
from .config import RunConfig, load_run_config

logger = logging.getLogger(__name__)


def load_prices(cfg: RunConfig):
    return load_csv(cfg.input, cfg.columns()) if cfg.input is not None else load_sample()


@guarded("forecast")
def handler(event):
    cfg = load_run_config(event)
    series = load_prices(cfg)
    # --to cuts the series so the forecast targets position `to`
    t = len(series) if cfg.eval_to is None else cfg.eval_to
    if not 2 <= t <= len(series):
        raise ConfigError(f"to must lie in [2, {len(series)}], got {t}", details=[f"to must be <= series length {len(series)}"])

    forecast = forecast_one_step(series.prefix(t), cfg.forecast_config())
    risk = forecast.risk
    logger.info(json.dumps({"event": "ForecastReady", "t": t, "var": risk.var_alpha, "es": risk.es_alpha}))
    return response(
        0,
        {
            "t": t,
            "v_hat": forecast.distribution.price_mean,
            "sigma_hat": forecast.distribution.price_std,
            "r_hat": risk.expected_return,
            "vol": risk.return_vol,
            "var": risk.var_alpha,
            "es": risk.es_alpha,
            "alpha": risk.alpha,
            "hyperparams": forecast.hyperparams.to_dict(),
            "config": cfg.to_dict(),
        },
    )
