"""Rolling out-of-sample VaR/ES evaluation and exception counting.

Step t (0-based position of the realized price) is forecast from prices[:t]
only; the realized return is prices[t] / prices[t-1] - 1.
"""

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ConfigError, PgpRiskError, StepFailed
from .forecaster import ForecastConfig, OneStepForecast, forecast_one_step
from .series_ingest import PriceSeries

logger = logging.getLogger(__name__)

BASEL_N = 250
BASEL_ALPHA = 0.01
BASEL_MAX_EXCEPTIONS = 5


@dataclass(frozen=True)
class BacktestStep:
    t: int
    realized_return: float
    r_hat: float
    vol: float
    var: float
    es: float
    exception: bool


@dataclass(frozen=True)
class RejectionRule:
    """Fixed exception threshold, or a one-sided binomial test at `confidence`.

    With no explicit threshold the fixed rule x > 5 applies when n=250 and
    alpha=0.01; every other (n, alpha) uses the binomial test.
    """

    max_exceptions: Optional[int] = None
    confidence: float = 0.95

    def threshold_for(self, n: int, alpha: float) -> Optional[int]:
        if self.max_exceptions is not None:
            return self.max_exceptions
        if n == BASEL_N and math.isclose(alpha, BASEL_ALPHA):
            return BASEL_MAX_EXCEPTIONS
        return None

    def rejects(self, x: int, n: int, alpha: float, p_value: float) -> bool:
        threshold = self.threshold_for(n, alpha)
        if threshold is not None:
            return x > threshold
        return p_value < 1.0 - self.confidence

    def describe(self, n: int, alpha: float) -> str:
        threshold = self.threshold_for(n, alpha)
        if threshold is not None:
            return f"x>{threshold}"
        return f"binomial p<{1.0 - self.confidence:.4g}"


@dataclass(frozen=True)
class BacktestReport:
    steps: tuple
    n: int
    x: int
    alpha: float
    binomial_pvalue: float
    reject: bool
    es_nrmse: Optional[float]
    rule: str = ""
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "x": self.x,
            "alpha": self.alpha,
            "p_value": self.binomial_pvalue,
            "reject": self.reject,
            "es_nrmse": self.es_nrmse,
            "rule": self.rule,
        }


def exception_indicator(var: float, realized_return: float) -> bool:
    return var - realized_return > 0


def binomial_upper_tail(x: int, n: int, p: float) -> float:
    """P[Bin(n, p) >= x], summed from exact log-factorials."""
    if x <= 0:
        return 1.0
    if x > n:
        return 0.0
    i = np.arange(x, n + 1)
    log_pmf = gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1) + i * math.log(p) + (n - i) * math.log1p(-p)
    return float(min(1.0, math.exp(logsumexp(log_pmf))))


def es_nrmse(es: Sequence[float], realized: Sequence[float]) -> Optional[float]:
    """Root-sum-square ES error over exception days, normalized by the spread
    of the exception returns. Undefined (None) for fewer than 2 exceptions."""
    es = np.asarray(es, dtype=float)
    realized = np.asarray(realized, dtype=float)
    if len(realized) <= 1:
        return None
    rho = math.sqrt(float(np.sum((realized - realized.mean()) ** 2)))
    if rho == 0.0:
        return None
    return math.sqrt(float(np.sum((es - realized) ** 2))) / rho


def summarize(steps: Sequence[BacktestStep], alpha: float, rule: RejectionRule = RejectionRule(), config=None) -> BacktestReport:
    steps = tuple(sorted(steps, key=lambda s: s.t))
    n = len(steps)
    exceptions = [s for s in steps if s.exception]
    x = len(exceptions)
    p_value = binomial_upper_tail(x, n, alpha)
    return BacktestReport(
        steps=steps,
        n=n,
        x=x,
        alpha=alpha,
        binomial_pvalue=p_value,
        reject=rule.rejects(x, n, alpha, p_value),
        es_nrmse=es_nrmse([s.es for s in exceptions], [s.realized_return for s in exceptions]),
        rule=rule.describe(n, alpha),
        config=dict(config or {}),
    )


def split_windows(report: BacktestReport, size: int, rule: RejectionRule = RejectionRule()) -> list[BacktestReport]:
    """Consecutive non-overlapping windows of `size` steps; a short tail is dropped."""
    steps = report.steps
    return [
        summarize(steps[start : start + size], report.alpha, rule, report.config)
        for start in range(0, len(steps) - size + 1, size)
    ]


Forecaster = Callable[[np.ndarray, ForecastConfig], OneStepForecast]


def _evaluate_step(t: int, prices: np.ndarray, cfg: ForecastConfig, forecaster: Forecaster, warm=None):
    try:
        if warm is None:
            forecast = forecaster(prices[:t], cfg)
        else:
            forecast = forecaster(prices[:t], cfg, warm)
    except PgpRiskError as exc:
        logger.warning(json.dumps({"event": "BacktestStepFailed", "t": t, "error": type(exc).__name__}))
        raise StepFailed(t, exc) from exc
    realized = float(prices[t] / prices[t - 1] - 1.0)
    risk = forecast.risk
    step = BacktestStep(
        t=t,
        realized_return=realized,
        r_hat=risk.expected_return,
        vol=risk.return_vol,
        var=risk.var_alpha,
        es=risk.es_alpha,
        exception=exception_indicator(risk.var_alpha, realized),
    )
    return step, forecast.hyperparams


def _step_worker(t, prices, cfg, forecaster):
    return _evaluate_step(t, prices, cfg, forecaster)[0]


def resolve_range(length: int, cfg: ForecastConfig, start: Optional[int] = None, end: Optional[int] = None):
    start = cfg.min_history if start is None else start
    end = length if end is None else end
    errors = []
    if start < 1:
        errors.append("from must be >= 1")
    if end > length:
        errors.append(f"to must be <= series length {length}")
    if start >= end:
        errors.append(f"empty evaluation range [{start}, {end})")
    if errors:
        raise ConfigError("invalid evaluation range", details=errors)
    return start, end


def run_backtest(
    prices,
    cfg: ForecastConfig,
    eval_range: Optional[tuple] = None,
    *,
    rule: RejectionRule = RejectionRule(),
    forecaster: Forecaster = forecast_one_step,
    jobs: int = 1,
) -> BacktestReport:
    """Forecast every step t in [start, end) and count VaR exceptions.

    Warm starts make each step depend on the previous fit, so they run
    sequentially regardless of `jobs`.
    """
    values = prices.prices if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=float)
    start, end = resolve_range(len(values), cfg, *(eval_range or (None, None)))
    indices = range(start, end)

    if cfg.optimizer.warm_start:
        steps, warm = [], None
        for t in indices:
            step, warm = _evaluate_step(t, values, cfg, forecaster, warm)
            steps.append(step)
    elif jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            worker = partial(_step_worker, prices=values, cfg=cfg, forecaster=forecaster)
            steps = list(pool.map(worker, indices, chunksize=max(1, len(indices) // (4 * jobs))))
    else:
        steps = [_step_worker(t, values, cfg, forecaster) for t in indices]

    report = summarize(steps, cfg.alpha, rule, config={**cfg.to_dict(), "from": start, "to": end})
    logger.info(
        json.dumps(
            {
                "event": "BacktestCompleted",
                "from": start,
                "to": end,
                "n": report.n,
                "x": report.x,
                "reject": report.reject,
            }
        )
    )
    return report


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
