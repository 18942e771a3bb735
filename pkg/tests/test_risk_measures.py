import math

import numpy as np
import pytest
from scipy import special, stats

from pgp_risk.errors import ErfDomainError, TailMassUnderflow
from pgp_risk.oracle_suite import bisect_quantile, erf_series, oracle_es, oracle_truncated_mean, oracle_var, truncated_cdf
from pgp_risk.risk_measures import (
    PredictiveDistribution,
    erf,
    erf_inv,
    erfc_inv,
    es_estimate,
    risk_forecast,
    truncated_mean,
    truncated_quantile,
    var_estimate,
)


def _pd(mean, std, last=None):
    return PredictiveDistribution(price_mean=mean, price_std=std, last_price=mean if last is None else last)


def _random_inputs(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        std = float(rng.uniform(0.5, 5.0))
        ratio = float(np.exp(rng.uniform(math.log(0.2), math.log(50.0))))
        alpha = float(np.exp(rng.uniform(math.log(0.001), math.log(0.5))))
        yield _pd(ratio * std, std, last=float(rng.uniform(0.5, 2.0)) * ratio * std), alpha


def test_erf_basics():
    assert erf(0.0) == 0.0
    assert erf_inv(0.0) == 0.0
    assert erf(1.0) == pytest.approx(0.8427007929497149, abs=1e-15)
    assert erf_inv(erf(0.7)) == pytest.approx(0.7, abs=1e-12)


def test_erf_matches_series():
    for x in np.linspace(-5.0, 5.0, 101):
        assert abs(erf(x) - erf_series(x)) <= 1e-14


def test_erf_inv_round_trip():
    for p in np.linspace(-0.999999, 0.999999, 201):
        assert abs(erf(erf_inv(p)) - p) <= 1e-12


@pytest.mark.parametrize("p", [1.0, -1.0, 1.5])
def test_erf_inv_domain(p):
    with pytest.raises(ErfDomainError):
        erf_inv(p)


def test_erfc_inv_keeps_tail_digits():
    for q in (1e-20, 1e-100, 1e-300):
        assert float(special.erfc(erfc_inv(q))) == pytest.approx(q, rel=1e-12)
    with pytest.raises(ErfDomainError):
        erfc_inv(0.0)


def test_median_in_untruncated_limit():
    assert truncated_quantile(_pd(1000.0, 1.0), 0.5) == pytest.approx(1000.0, abs=1e-9)
    assert var_estimate(_pd(1000.0, 1.0), 0.5) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("mean, std, alpha", [(100.0, 5.0, 0.01), (1.0, 2.0, 0.10), (3.0, 1.0, 0.3)])
def test_quantile_matches_bisection(mean, std, alpha):
    reference = bisect_quantile(alpha, mean, std, 1e-10 * std)

    assert truncated_quantile(_pd(mean, std), alpha) == pytest.approx(reference, abs=1e-8 * std)


def test_quantile_has_requested_tail_mass():
    for pd, alpha in _random_inputs(10, seed=1):
        q = truncated_quantile(pd, alpha)
        assert truncated_cdf(q, pd.price_mean, pd.price_std) == pytest.approx(alpha, abs=1e-8)


def test_var_is_quantile_return():
    for pd, alpha in _random_inputs(50, seed=2):
        assert var_estimate(pd, alpha) == pytest.approx(truncated_quantile(pd, alpha) / pd.last_price - 1.0, abs=1e-12)


def test_var_gaussian_one_percent():
    pd = _pd(100.0, 1.0)

    assert var_estimate(pd, 0.01) == pytest.approx(-2.3263478740408408 / 100.0, abs=1e-12)


def test_untruncated_limit_matches_gaussian_formulas():
    for ratio in (8.0, 20.0, 300.0):
        pd = _pd(ratio * 0.5, 0.5, last=ratio * 0.5 * 1.01)
        for alpha in (0.001, 0.01, 0.05, 0.25):
            z = stats.norm.ppf(alpha)
            var = pd.expected_return + pd.return_vol * z
            es = pd.expected_return - pd.return_vol * stats.norm.pdf(z) / alpha
            assert var_estimate(pd, alpha) == pytest.approx(var, rel=1e-10)
            assert es_estimate(pd, alpha) == pytest.approx(es, rel=1e-10)


def test_es_matches_quadrature():
    pd = _pd(100.0, 5.0)

    assert es_estimate(pd, 0.01) == pytest.approx(oracle_es(pd, 0.01), rel=1e-8, abs=1e-10)


def test_es_matches_quadrature_under_heavy_truncation():
    for pd, alpha in _random_inputs(10, seed=3):
        reference = oracle_es(pd, alpha)
        assert es_estimate(pd, alpha) == pytest.approx(reference, rel=1e-8, abs=1e-10)


def test_es_tends_to_truncated_mean():
    pd = _pd(1.0, 2.0, last=1.0)

    limit = oracle_truncated_mean(1.0, 2.0) - 1.0

    assert es_estimate(pd, 1.0 - 1e-12) == pytest.approx(limit, abs=1e-8)
    assert truncated_mean(pd) - 1.0 == pytest.approx(limit, abs=1e-10)


def test_es_below_var():
    for pd, alpha in _random_inputs(1000, seed=4):
        assert es_estimate(pd, alpha) <= var_estimate(pd, alpha)


def test_monotone_in_alpha():
    pd = _pd(2.0, 1.5, last=2.0)
    alphas = np.linspace(0.001, 0.999, 60)

    quantiles = [truncated_quantile(pd, a) for a in alphas]
    shortfalls = [es_estimate(pd, a) for a in alphas]

    assert all(later > earlier for earlier, later in zip(quantiles, quantiles[1:]))
    assert all(later >= earlier for earlier, later in zip(shortfalls, shortfalls[1:]))


def test_common_scale_leaves_returns_unchanged():
    pd = _pd(103.0, 2.5, last=101.0)
    for factor in (0.25, 4.0, 1024.0):
        scaled = _pd(103.0 * factor, 2.5 * factor, last=101.0 * factor)
        assert var_estimate(scaled, 0.01) == pytest.approx(var_estimate(pd, 0.01), abs=1e-14)
        assert es_estimate(scaled, 0.01) == pytest.approx(es_estimate(pd, 0.01), abs=1e-14)


def test_var_below_expected_return():
    for pd, alpha in _random_inputs(200, seed=5):
        if pd.price_mean / pd.price_std > 6:
            assert var_estimate(pd, alpha) <= pd.expected_return


def test_large_mean_to_std_ratio_stays_finite():
    pd = _pd(5000.0, 1.0)

    risk = risk_forecast(pd, 0.01)

    assert all(math.isfinite(v) for v in (risk.var_alpha, risk.es_alpha))
    assert risk.es_alpha < risk.var_alpha < 0.0


def test_vanishing_tail_mass_raises():
    with pytest.raises(TailMassUnderflow):
        es_estimate(_pd(-27.0 * math.sqrt(2.0), 1.0, last=1.0), 0.01)


def test_bad_alpha():
    with pytest.raises(ValueError):
        var_estimate(_pd(1.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        es_estimate(_pd(1.0, 1.0), 1.0)


def test_invalid_distribution():
    with pytest.raises(ValueError):
        PredictiveDistribution(price_mean=1.0, price_std=0.0, last_price=1.0)


def test_risk_forecast_fields():
    pd = _pd(101.0, 2.0, last=100.0)

    risk = risk_forecast(pd, 0.05)

    assert risk.expected_return == pytest.approx(0.01)
    assert risk.return_vol == pytest.approx(0.02)
    assert risk.to_dict()["var"] == risk.var_alpha
    assert risk.alpha == 0.05


def test_var_matches_reference_returns():
    for pd, alpha in _random_inputs(10, seed=6):
        assert var_estimate(pd, alpha) == pytest.approx(oracle_var(pd, alpha), abs=1e-8 * pd.return_vol)
