"""VaR and ES of a Gaussian price forecast truncated to positive prices.

With a = V/(sqrt(2) s) the truncated quantile is V - sqrt(2) s erfinv(lam),
lam = (1 - alpha) erf(a) - alpha. Both lam and the ES normalizer are
evaluated through complementary forms, (1 - lam) = (1 - alpha) erfc(a) + 2 alpha
and erf(a) - erf(b) = alpha (1 + erf(a)), so no erf difference is ever taken.
"""

import math
from dataclasses import dataclass

from scipy import special

from .errors import ErfDomainError, TailMassUnderflow

SQRT2 = math.sqrt(2.0)
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
TAIL_MASS_FLOOR = 1e-300
NEWTON_STEPS = 2


@dataclass(frozen=True)
class PredictiveDistribution:
    price_mean: float
    price_std: float
    last_price: float

    def __post_init__(self):
        if not math.isfinite(self.price_mean):
            raise ValueError(f"price_mean must be finite, got {self.price_mean!r}")
        if not (math.isfinite(self.price_std) and self.price_std > 0):
            raise ValueError(f"price_std must be positive, got {self.price_std!r}")
        if not (math.isfinite(self.last_price) and self.last_price > 0):
            raise ValueError(f"last_price must be positive, got {self.last_price!r}")

    @property
    def expected_return(self) -> float:
        return self.price_mean / self.last_price - 1.0

    @property
    def return_vol(self) -> float:
        return self.price_std / self.last_price

    @property
    def _a(self) -> float:
        return self.price_mean / (SQRT2 * self.price_std)


@dataclass(frozen=True)
class RiskForecast:
    expected_return: float
    return_vol: float
    var_alpha: float
    es_alpha: float
    alpha: float

    def to_dict(self) -> dict:
        return {
            "expected_return": self.expected_return,
            "return_vol": self.return_vol,
            "var": self.var_alpha,
            "es": self.es_alpha,
            "alpha": self.alpha,
        }


def erf(x: float) -> float:
    return float(special.erf(x))


def _newton(x: float, residual, target: float, sign: float) -> float:
    for _ in range(NEWTON_STEPS):
        slope = TWO_OVER_SQRT_PI * math.exp(-x * x)
        if slope == 0.0 or not math.isfinite(x):
            break
        x -= sign * (residual(x) - target) / slope
    return x


def erf_inv(p: float) -> float:
    if not -1.0 < p < 1.0:
        raise ErfDomainError(f"erf_inv needs |p| < 1, got {p!r}")
    return _newton(float(special.erfinv(p)), erf, p, 1.0)


def erfc_inv(q: float) -> float:
    """Inverse of erfc on (0, 2); accurate where 1 - q would lose digits."""
    if not 0.0 < q < 2.0:
        raise ErfDomainError(f"erfc_inv needs 0 < q < 2, got {q!r}")
    return _newton(float(special.erfcinv(q)), lambda x: float(special.erfc(x)), q, -1.0)


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def _erfinv_lambda(pd: PredictiveDistribution, alpha: float) -> float:
    """erfinv(lam) for lam = (1 - alpha) erf(a) - alpha, without forming lam."""
    _check_alpha(alpha)
    a = pd._a
    upper = (1.0 - alpha) * float(special.erfc(a)) + 2.0 * alpha  # 1 - lam
    if upper <= 1.0:
        return erfc_inv(upper)
    lower = (1.0 - alpha) * float(special.erfc(-a))  # 1 + lam
    return -erfc_inv(lower)


def truncated_quantile(pd: PredictiveDistribution, alpha: float) -> float:
    return pd.price_mean - SQRT2 * pd.price_std * _erfinv_lambda(pd, alpha)


def var_estimate(pd: PredictiveDistribution, alpha: float) -> float:
    return pd.expected_return - SQRT2 * pd.return_vol * _erfinv_lambda(pd, alpha)


def _log_one_plus_erf(a: float) -> float:
    # 1 + erf(a) = 2 Phi(sqrt(2) a)
    return math.log(2.0) + float(special.log_ndtr(SQRT2 * a))


def _log_exp_difference(b: float, a: float) -> tuple[float, float]:
    """(sign, log|exp(-b^2) - exp(-a^2)|)."""
    b2, a2 = b * b, a * a
    if b2 == a2:
        return 0.0, -math.inf
    if b2 < a2:
        return 1.0, -b2 + math.log(-math.expm1(b2 - a2))
    return -1.0, -a2 + math.log(-math.expm1(a2 - b2))


def _shortfall_price(pd: PredictiveDistribution, alpha: float) -> float:
    _check_alpha(alpha)
    a = pd._a
    log_mass = math.log(alpha) + _log_one_plus_erf(a)
    if log_mass < math.log(TAIL_MASS_FLOOR):
        raise TailMassUnderflow(f"tail mass below {TAIL_MASS_FLOOR} (a={a!r}, alpha={alpha!r})")
    b = _erfinv_lambda(pd, alpha)
    sign, log_numerator = _log_exp_difference(b, a)
    ratio = sign * math.exp(log_numerator - log_mass) if sign else 0.0
    return pd.price_mean - SQRT_2_OVER_PI * pd.price_std * ratio


def es_estimate(pd: PredictiveDistribution, alpha: float) -> float:
    """Mean return over prices below the alpha-quantile of the truncated forecast."""
    return _shortfall_price(pd, alpha) / pd.last_price - 1.0


def truncated_mean(pd: PredictiveDistribution) -> float:
    """Mean price of the forecast truncated to (0, inf)."""
    a = pd._a
    log_ratio = -a * a - _log_one_plus_erf(a)
    return pd.price_mean + SQRT_2_OVER_PI * pd.price_std * math.exp(log_ratio)


def risk_forecast(pd: PredictiveDistribution, alpha: float) -> RiskForecast:
    return RiskForecast(
        expected_return=pd.expected_return,
        return_vol=pd.return_vol,
        var_alpha=var_estimate(pd, alpha),
        es_alpha=es_estimate(pd, alpha),
        alpha=alpha,
    )
