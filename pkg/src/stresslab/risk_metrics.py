"""Portfolio aggregation and empirical risk measures.

VaR and ES use the positive-loss convention and an order-statistic quantile:
with ``k = ceil((1 - confidence) * n)``, VaR is minus the k-th smallest return
and ES is minus the mean of the k smallest returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

MIN_OBS = 20


@dataclass(frozen=True)
class PortfolioSpec:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("portfolio weights must be a finite vector")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"portfolio weights must sum to 1 (got {w.sum()!r})")
        object.__setattr__(self, "weights", w)

    @classmethod
    def equal(cls, n: int) -> "PortfolioSpec":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, weights: Sequence[float]) -> "PortfolioSpec":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())


@dataclass(frozen=True)
class RiskReport:
    var_95: float
    es_95: float
    max_drawdown: float


@dataclass(frozen=True)
class DeltaReport:
    d_var: float
    d_es: float
    d_drawdown: float


def portfolio_returns(R: np.ndarray, p: PortfolioSpec | np.ndarray) -> np.ndarray:
    w = p.weights if isinstance(p, PortfolioSpec) else np.asarray(p, dtype=float)
    R = np.asarray(R, dtype=float)
    if R.shape[-1] != w.shape[0]:
        raise ValueError(f"return matrix has {R.shape[-1]} columns but portfolio has {w.shape[0]} weights")
    return R @ w


def tail_count(n: int, confidence: float) -> int:
    # (1 - 0.95) * 100 evaluates to 5.000000000000004; without the slack ceil gives 6
    return max(1, math.ceil((1.0 - confidence) * n - 1e-9))


def _check_series(r, confidence: float) -> np.ndarray:
    r = np.asarray(r, dtype=float).ravel()
    if r.size < MIN_OBS:
        raise ValueError(f"need at least {MIN_OBS} observations, got {r.size}")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    return r


def value_at_risk(r, confidence: float = 0.95) -> float:
    r = _check_series(r, confidence)
    k = tail_count(r.size, confidence)
    return float(-np.partition(r, k - 1)[k - 1])


def expected_shortfall(r, confidence: float = 0.95) -> float:
    r = _check_series(r, confidence)
    k = tail_count(r.size, confidence)
    return float(-np.sort(r)[:k].mean())


def max_drawdown(r) -> float:
    """Largest peak-to-trough decline of compounded wealth, starting from 1."""
    r = np.asarray(r, dtype=float).ravel()
    if np.any(r <= -1.0):
        raise ValueError("returns must exceed -1 to compound wealth")
    wealth = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    peak = np.maximum.accumulate(wealth)
    return float(np.max((peak - wealth) / peak))


def risk_report(r, confidence: float = 0.95) -> RiskReport:
    return RiskReport(value_at_risk(r, confidence), expected_shortfall(r, confidence), max_drawdown(r))


def delta_metrics(base: RiskReport, stressed: RiskReport) -> DeltaReport:
    return DeltaReport(
        stressed.var_95 - base.var_95,
        stressed.es_95 - base.es_95,
        stressed.max_drawdown - base.max_drawdown,
    )


def sector_shifts(base: np.ndarray, stressed: np.ndarray, sector_columns: Mapping[str, np.ndarray]) -> dict[str, float]:
    """Mean of (stressed - base) over each sector's member columns and all rows."""
    base = np.asarray(base, dtype=float)
    stressed = np.asarray(stressed, dtype=float)
    if base.shape != stressed.shape:
        raise ValueError(f"shape mismatch: {base.shape} vs {stressed.shape}")
    diff = stressed - base
    return {s: float(diff[:, cols].mean()) for s, cols in sector_columns.items()}
