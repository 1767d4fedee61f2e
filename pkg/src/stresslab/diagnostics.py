"""Exploratory statistics and univariate time-series diagnostics.

GARCH(1,1) is fitted on demeaned returns by Gaussian maximum likelihood.
Internally the series is divided by its sample standard deviation so the
optimizer sees O(1) numbers whether inputs are decimal or percent returns;
``omega`` is scaled back before it is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal, stats

from .market_data import GarchParams, ReturnMatrix, garch_noise

# constant-only Dickey-Fuller asymptotic critical values
ADF_CRITICAL = {0.01: -3.43035, 0.05: -2.86154, 0.10: -2.56677}


@dataclass(frozen=True)
class DescriptiveStats:
    tickers: list[str]
    mean: np.ndarray
    std: np.ndarray
    skew: np.ndarray


@dataclass(frozen=True)
class SectorCorrelation:
    sectors: list[str]
    matrix: np.ndarray


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lag: int
    nobs: int
    reject_1: bool
    reject_5: bool
    reject_10: bool
    pvalue_interval: tuple[float, float]

    def rejects(self, level: float) -> bool:
        return {0.01: self.reject_1, 0.05: self.reject_5, 0.10: self.reject_10}[level]


@dataclass(frozen=True)
class GarchFit:
    omega: float
    alpha: float
    beta: float
    loglik: float
    init_loglik: float
    converged: bool
    conditional_variance: np.ndarray

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def params(self) -> GarchParams:
        return GarchParams(self.omega, self.alpha, self.beta)


# --- descriptive ----------------------------------------------------------------


def descriptive_stats(r: ReturnMatrix) -> DescriptiveStats:
    X = r.values
    if X.shape[0] < 3:
        raise ValueError("need at least 3 observations per column")
    std = X.std(axis=0, ddof=1)
    bad = [t for t, s in zip(r.tickers, std) if not s > 0]
    if bad:
        raise ValueError(f"degenerate (constant) return series: {bad}")
    skew = stats.skew(X, axis=0, bias=False)
    return DescriptiveStats(list(r.tickers), X.mean(axis=0), std, np.asarray(skew))


def sector_returns(r: ReturnMatrix) -> tuple[list[str], np.ndarray]:
    """Equal-weight average daily return of each sector, columns in sorted sector order."""
    cols = r.sector_columns()
    labels = list(cols)
    return labels, np.column_stack([r.values[:, c].mean(axis=1) for c in cols.values()])


def sector_correlation(r: ReturnMatrix) -> SectorCorrelation:
    labels, S = sector_returns(r)
    sd = S.std(axis=0, ddof=1)
    flat = [s for s, v in zip(labels, sd) if not v > 0]
    if flat:
        raise ValueError(f"sector return series with zero variance: {flat}")
    C = np.atleast_2d(np.corrcoef(S, rowvar=False))
    C = np.clip(0.5 * (C + C.T), -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return SectorCorrelation(labels, C)


# --- ADF ------------------------------------------------------------------------


def default_max_lag(n: int) -> int:
    return int(math.ceil(12.0 * (n / 100.0) ** 0.25))


def _adf_design(x: np.ndarray, p: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    dx = np.diff(x)
    # dx[t-1] = x[t] - x[t-1]; regress dx[i] for i >= start on x[i], dx[i-1..i-p]
    idx = np.arange(start, dx.size)
    cols = [np.ones(idx.size), x[idx]]
    cols += [dx[idx - j] for j in range(1, p + 1)]
    return np.column_stack(cols), dx[idx]


def _ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise np.linalg.LinAlgError("singular ADF regression")
    XtX_inv = np.linalg.inv(X.T @ X)
    beta = XtX_inv @ X.T @ y
    resid = y - X @ beta
    return beta, XtX_inv, float(resid @ resid)


def adf_test(x, max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant; lag order picked by AIC.

    All candidate lags are compared on the common sample that the largest lag
    allows; the chosen lag is then refitted on its full available sample.
    """
    x = np.asarray(x, dtype=float).ravel()
    if max_lag is None:
        max_lag = default_max_lag(x.size)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if x.size < 25 + max_lag:
        raise ValueError(f"series of length {x.size} too short for max_lag={max_lag}")

    best_p, best_aic = 0, np.inf
    for p in range(max_lag + 1):
        X, y = _adf_design(x, p, max_lag)
        _, _, rss = _ols(X, y)
        aic = y.size * math.log(rss / y.size) + 2 * X.shape[1]
        if aic < best_aic - 1e-12:
            best_p, best_aic = p, aic

    X, y = _adf_design(x, best_p, best_p)
    beta, XtX_inv, rss = _ols(X, y)
    dof = y.size - X.shape[1]
    se = math.sqrt(rss / dof * XtX_inv[1, 1])
    stat = float(beta[1] / se)

    r1, r5, r10 = (stat < ADF_CRITICAL[a] for a in (0.01, 0.05, 0.10))
    if r1:
        interval = (0.0, 0.01)
    elif r5:
        interval = (0.01, 0.05)
    elif r10:
        interval = (0.05, 0.10)
    else:
        interval = (0.10, 1.0)
    return AdfResult(stat, best_p, int(y.size), r1, r5, r10, interval)


# --- GARCH(1,1) -----------------------------------------------------------------


def garch_simulate(params: GarchParams, T: int, seed: int) -> np.ndarray:
    """Zero-mean GARCH(1,1) path with Gaussian innovations, started at the
    unconditional variance."""
    params.validate()
    return garch_noise(params, T, 1, np.random.default_rng(seed))[:, 0]


def garch_variance(eps: np.ndarray, omega: float, alpha: float, beta: float, var0: float) -> np.ndarray:
    """sigma2[0] = var0; sigma2[t] = omega + alpha*eps[t-1]^2 + beta*sigma2[t-1]."""
    u = omega + alpha * eps[:-1] ** 2
    rest = signal.lfilter([1.0], [1.0, -beta], u, zi=[beta * var0])[0]
    return np.concatenate([[var0], rest])


def garch_loglik(eps: np.ndarray, omega: float, alpha: float, beta: float, var0: float | None = None) -> float:
    var0 = float(np.mean(eps**2)) if var0 is None else var0
    s2 = garch_variance(eps, omega, alpha, beta, var0)
    return float(-0.5 * np.sum(np.log(2.0 * np.pi) + np.log(s2) + eps**2 / s2))


def _to_params(theta: np.ndarray) -> tuple[float, float, float]:
    omega = math.exp(theta[0])
    persist = 1.0 / (1.0 + math.exp(-theta[1]))
    share = 1.0 / (1.0 + math.exp(-theta[2]))
    return omega, persist * share, persist * (1.0 - share)


def _to_theta(omega: float, alpha: float, beta: float) -> np.ndarray:
    p = alpha + beta
    return np.array([math.log(omega), math.log(p / (1.0 - p)), math.log(alpha / beta)])


_STARTS = ((0.05, 0.90), (0.10, 0.80), (0.15, 0.50))


def garch_fit(x, max_iter: int = 4000) -> GarchFit:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 250:
        raise ValueError(f"GARCH fit needs at least 250 observations, got {x.size}")
    eps = x - x.mean()
    scale = float(eps.std())
    if not scale > 0:
        raise ValueError("cannot fit GARCH to a constant series")
    e = eps / scale
    var0 = float(np.var(e, ddof=1))

    def nll(theta):
        if np.any(np.abs(theta) > 50):
            return np.inf
        w, a, b = _to_params(theta)
        val = -garch_loglik(e, w, a, b, var0)
        return val if np.isfinite(val) else np.inf

    starts = [_to_theta(1.0 - a - b, a, b) for a, b in _STARTS]
    init_nll = nll(starts[0])
    best = None
    for th0 in starts:
        res = optimize.minimize(nll, th0, method="Nelder-Mead",
                                options={"maxiter": max_iter, "xatol": 1e-7, "fatol": 1e-9})
        if best is None or res.fun < best.fun:
            best = res
    # restart from the optimum to shake off a collapsed simplex
    polished = optimize.minimize(nll, best.x, method="Nelder-Mead",
                                 options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-10})
    if polished.fun <= best.fun:
        best = polished

    w, a, b = _to_params(best.x)
    log_scale = x.size * math.log(scale)
    s2 = garch_variance(e, w, a, b, var0) * scale**2
    return GarchFit(
        omega=w * scale**2,
        alpha=a,
        beta=b,
        loglik=float(-best.fun - log_scale),
        init_loglik=float(-init_nll - log_scale),
        converged=bool(best.success),
        conditional_variance=s2,
    )
