import math

import numpy as np
import pytest
from scipy import stats
from statsmodels.tsa.stattools import adfuller

from stresslab.diagnostics import (
    ADF_CRITICAL,
    adf_test,
    default_max_lag,
    descriptive_stats,
    garch_fit,
    garch_loglik,
    garch_simulate,
    garch_variance,
    sector_correlation,
    sector_returns,
)
from stresslab.market_data import GarchParams, ReturnMatrix


def returns(values, sectors=None):
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    tickers = [f"T{j}" for j in range(n)]
    sectors = sectors or ["X"] * n
    dates = np.datetime64("2020-01-02") + np.arange(values.shape[0])
    return ReturnMatrix(dates, tickers, dict(zip(tickers, sectors)), values)


def test_descriptive_stats_against_formulae():
    x = np.array([0.0, 0.0, 3.0])
    s = descriptive_stats(returns(np.column_stack([x, [1.0, 2.0, 4.0]])))
    assert s.mean[0] == 1.0
    assert s.std[0] == pytest.approx(math.sqrt(3.0), abs=1e-15)
    # adjusted Fisher-Pearson skew by hand: g1 * sqrt(n(n-1)) / (n-2)
    n = 3
    m2, m3 = np.mean((x - 1) ** 2), np.mean((x - 1) ** 3)
    assert s.skew[0] == pytest.approx(m3 / m2**1.5 * math.sqrt(n * (n - 1)) / (n - 2), rel=1e-12)
    assert s.skew[0] == pytest.approx(math.sqrt(3.0), rel=1e-12)


def test_descriptive_stats_rejects_constant_column():
    with pytest.raises(ValueError, match="T1"):
        descriptive_stats(returns(np.column_stack([[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]])))


def test_sector_correlation_cases():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=300), rng.normal(size=300)
    r = returns(np.column_stack([a, a, -a, b]), ["A", "A", "B", "C"])
    labels, S = sector_returns(r)
    assert labels == ["A", "B", "C"]
    np.testing.assert_array_equal(S[:, 0], a)
    c = sector_correlation(r)
    assert c.matrix[0, 1] == pytest.approx(-1.0, abs=1e-12)
    assert abs(c.matrix[0, 2]) < 0.2
    assert np.array_equal(c.matrix, c.matrix.T)
    assert np.all(np.diag(c.matrix) == 1.0)
    assert np.all(np.linalg.eigvalsh(c.matrix) > -1e-10)


def test_default_max_lag():
    assert default_max_lag(100) == 12
    assert default_max_lag(1000) == math.ceil(12 * 10**0.25)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("kind", ["white", "walk", "ar"])
def test_adf_matches_statsmodels(seed, kind):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(400)
    x = {"white": e, "walk": np.cumsum(e), "ar": np.zeros(400)}[kind]
    if kind == "ar":
        for t in range(1, 400):
            x[t] = 0.6 * x[t - 1] + e[t]
    ours = adf_test(x)
    stat, _, lag, nobs, *_ = adfuller(x, regression="c", autolag="AIC")
    assert ours.lag == lag and ours.nobs == nobs
    assert ours.statistic == pytest.approx(stat, rel=1e-8)


def test_adf_decisions_and_pvalue_interval():
    e = np.random.default_rng(1).standard_normal(500)
    white = adf_test(e)
    assert white.reject_1 and white.reject_5 and white.reject_10
    assert white.pvalue_interval == (0.0, 0.01)
    walk = adf_test(np.cumsum(e))
    assert not walk.reject_5
    assert walk.rejects(0.05) == (walk.statistic < ADF_CRITICAL[0.05])
    lo, hi = walk.pvalue_interval
    assert lo < hi and (lo, hi) in {(0.0, 0.01), (0.01, 0.05), (0.05, 0.10), (0.10, 1.0)}


def test_adf_rejects_bad_input():
    with pytest.raises(ValueError):
        adf_test(np.ones(200))
    with pytest.raises(ValueError):
        adf_test(np.zeros(5))


def test_garch_variance_matches_loop():
    eps = np.random.default_rng(0).standard_normal(50)
    s2 = garch_variance(eps, 0.1, 0.2, 0.7, 1.5)
    ref = [1.5]
    for t in range(1, 50):
        ref.append(0.1 + 0.2 * eps[t - 1] ** 2 + 0.7 * ref[-1])
    np.testing.assert_allclose(s2, ref, rtol=1e-13)


def test_garch_loglik_matches_normal_density():
    eps = np.random.default_rng(1).standard_normal(80)
    s2 = garch_variance(eps, 0.1, 0.1, 0.8, 1.0)
    ref = stats.norm.logpdf(eps, scale=np.sqrt(s2)).sum()
    assert garch_loglik(eps, 0.1, 0.1, 0.8, 1.0) == pytest.approx(ref, rel=1e-12)


def test_garch_simulate_moments():
    p = GarchParams(0.1, 0.05, 0.90)
    x = garch_simulate(p, 100_000, 0)
    assert np.array_equal(x, garch_simulate(p, 100_000, 0))
    assert x.var() == pytest.approx(p.unconditional_variance, rel=0.05)
    assert stats.kurtosis(x) > 0  # conditional heteroskedasticity fattens tails


@pytest.mark.parametrize(
    "omega, alpha, beta",
    [(0.05, 0.05, 0.90), (0.1, 0.10, 0.85), (2e-6, 0.08, 0.90), (0.5, 0.15, 0.70), (0.2291, 0.0824, 0.8340)],
)
def test_garch_recovers_parameters(omega, alpha, beta):
    fits = [garch_fit(garch_simulate(GarchParams(omega, alpha, beta), 5000, s)) for s in range(5)]
    a = np.median([f.alpha for f in fits])
    b = np.median([f.beta for f in fits])
    w = np.median([f.omega for f in fits])
    assert abs(a - alpha) <= 0.3 * alpha
    assert abs(b - beta) <= 0.07
    assert abs(w - omega) <= 0.5 * omega
    assert all(f.loglik >= f.init_loglik and f.persistence < 1 for f in fits)


def test_garch_on_iid_noise_finds_no_arch_effect():
    fit = garch_fit(np.random.default_rng(4).standard_normal(5000) * 0.01)
    assert fit.alpha < 0.05
    assert fit.conditional_variance.shape == (5000,)


def test_garch_needs_enough_data():
    with pytest.raises(ValueError):
        garch_fit(np.random.default_rng(0).standard_normal(100))
