"""Rolling-window stress pipelines: PCA and AE latent perturbation, VAE
posterior Monte Carlo, and per-factor attribution.

A stress shifts every row of a latent column by the same amount, a multiple
of that column's within-window sample std, so the stressed window is still a
return path and drawdown is defined on it. Baseline metrics come from the
unperturbed reconstruction, never from the raw returns.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from scipy import stats

from . import factor_pca as pca
from . import neural_nets as nn
from .market_data import (
    DataError,
    ReturnMatrix,
    WindowView,
    destandardize,
    fit_standardizer,
    rolling_windows,
    standardize,
)
from .risk_metrics import (
    DeltaReport,
    PortfolioSpec,
    RiskReport,
    delta_metrics,
    portfolio_returns,
    risk_report,
    sector_shifts,
    tail_count,
)

log = logging.getLogger(__name__)

PCA_MULTI_DELTA = (2.0, -1.5, 1.0, 0.5, -0.5)
AE_MULTI_DELTA = (2.0, -1.0, 1.5, -0.5, 1.0)
CRISES = {
    "gfc2008": ("2008-09-01", "2009-03-31"),
    "covid2020": ("2020-02-01", "2020-05-31"),
}
DEFAULT_WINDOW = {"pca": 252, "ae": 504, "vae": 504}
HIST_BINS = 50

T = TypeVar("T")


@dataclass(frozen=True)
class StressSpec:
    kind: str  # "single" | "multi"
    multipliers: tuple[float, ...]
    component: int | None = None

    def __post_init__(self):
        if self.kind not in ("single", "multi"):
            raise ValueError(f"unknown stress kind {self.kind!r}")
        if not np.all(np.isfinite(self.multipliers)):
            raise ValueError("stress multipliers must be finite")

    @classmethod
    def single(cls, component: int, d: int = 5, k: float = 2.0, sign: int = 1) -> "StressSpec":
        if not 0 <= component < d:
            raise ValueError(f"component index {component} out of range for d={d}")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        m = [0.0] * d
        m[component] = sign * float(k)
        return cls("single", tuple(m), component)

    @classmethod
    def multi(cls, delta: Sequence[float], sign: int = 1) -> "StressSpec":
        return cls("multi", tuple(sign * float(x) for x in delta))

    @classmethod
    def null(cls, d: int = 5) -> "StressSpec":
        return cls("multi", (0.0,) * d)

    @property
    def d(self) -> int:
        return len(self.multipliers)

    def shifts(self, sigma: np.ndarray) -> np.ndarray:
        if sigma.shape[0] != self.d:
            raise ValueError(f"stress has {self.d} components but the model has {sigma.shape[0]}")
        return np.asarray(self.multipliers) * sigma

    def label(self) -> str:
        if self.kind == "single":
            return f"single:{self.component}:{self.multipliers[self.component]:+g}"
        return "multi:" + ",".join(f"{m:+g}" for m in self.multipliers)


@dataclass(frozen=True)
class WindowResult:
    index: int
    start: int
    stop: int
    start_date: str
    end_date: str
    spec: StressSpec
    baseline: RiskReport | None = None
    stressed: RiskReport | None = None
    delta: DeltaReport | None = None
    sector_shift: dict[str, float] | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class McResult:
    index: int
    start_date: str
    end_date: str
    samples: np.ndarray
    mean: float
    std: float
    skewness: float
    q05: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class AttributionRow:
    factor: str
    d_var: float
    d_es: float
    d_drawdown: float


@dataclass(frozen=True)
class StressContext:
    """Everything a window needs to turn latents into metrics."""

    portfolio: PortfolioSpec
    sector_columns: dict[str, np.ndarray]
    confidence: float = 0.95


def _pmap(fn: Callable[[WindowView], T], views: Iterable[WindowView], threads: int = 1) -> list[T]:
    views = list(views)
    if threads <= 1 or len(views) <= 1:
        return [fn(v) for v in views]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, views))


def _context(r: ReturnMatrix, portfolio: PortfolioSpec | None, confidence: float) -> StressContext:
    p = portfolio or PortfolioSpec.equal(r.values.shape[1])
    if p.weights.shape[0] != r.values.shape[1]:
        raise ValueError(f"portfolio has {p.weights.shape[0]} weights for {r.values.shape[1]} assets")
    return StressContext(p, r.sector_columns(), confidence)


def _dates(view: WindowView) -> tuple[str, str]:
    return str(view.dates[0]), str(view.dates[-1])


def _compare(base: np.ndarray, stressed: np.ndarray, ctx: StressContext):
    b = risk_report(portfolio_returns(base, ctx.portfolio), ctx.confidence)
    s = risk_report(portfolio_returns(stressed, ctx.portfolio), ctx.confidence)
    return b, s, delta_metrics(b, s), sector_shifts(base, stressed, ctx.sector_columns)


def stress_latents(
    latents: np.ndarray,
    reconstruct: Callable[[np.ndarray], np.ndarray],
    spec: StressSpec,
    ctx: StressContext,
):
    """Baseline/stressed reconstructions and metrics for one latent matrix."""
    sigma = latents.std(axis=0, ddof=1)
    base = reconstruct(latents)
    stressed = reconstruct(latents + spec.shifts(sigma))
    return base, stressed, _compare(base, stressed, ctx)


def _window_result(view: WindowView, spec: StressSpec, metrics) -> WindowResult:
    b, s, dlt, shifts = metrics
    return WindowResult(view.index, view.start, view.stop, *_dates(view), spec, b, s, dlt, shifts)


def _failed(view: WindowView, spec: StressSpec, exc: Exception) -> WindowResult:
    log.warning("window %d skipped: %s", view.index, exc)
    return WindowResult(view.index, view.start, view.stop, *_dates(view), spec, error=f"{type(exc).__name__}: {exc}")


# --- PCA ------------------------------------------------------------------------


def pca_window(view: WindowView, d: int):
    """Fitted model, scores and reconstruction function for one raw window."""
    model = pca.fit_pca(view, d)
    scores = pca.transform(model, view.values)
    return model, scores, (lambda S: pca.inverse_transform(model, S))


def run_pca_stress(
    r: ReturnMatrix,
    w: int = 252,
    d: int = 5,
    spec: StressSpec | None = None,
    portfolio: PortfolioSpec | None = None,
    stride: int = 21,
    threads: int = 1,
    confidence: float = 0.95,
    on_model: Callable[[int, pca.PcaModel], None] | None = None,
) -> list[WindowResult]:
    spec = spec or StressSpec.multi(PCA_MULTI_DELTA)
    ctx = _context(r, portfolio, confidence)

    def one(view: WindowView) -> WindowResult:
        try:
            model, scores, recon = pca_window(view, d)
            if on_model is not None:
                on_model(view.index, model)
            return _window_result(view, spec, stress_latents(scores, recon, spec, ctx)[2])
        except (ValueError, np.linalg.LinAlgError) as exc:
            return _failed(view, spec, exc)

    return _pmap(one, rolling_windows(r, w, stride), threads)


# --- AE -------------------------------------------------------------------------


def ae_window(view: WindowView, d: int, cfg: nn.TrainConfig, tickers=None, hidden: int = 16):
    """Train an AE on the standardized window; returns model, latents, reconstruction."""
    scaler = fit_standardizer(view, tickers)
    Z = standardize(view.values, scaler)
    n = Z.shape[1]
    model = nn.train_ae(Z, replace(cfg, seed=cfg.seed + view.index), shape=(n, hidden, d, hidden, n))
    model.standardizer = scaler
    latents = nn.encode(model, Z)
    return model, latents, (lambda L: destandardize(nn.decode(model, L), scaler))


def run_ae_stress(
    r: ReturnMatrix,
    w: int = 504,
    d: int = 5,
    spec: StressSpec | None = None,
    cfg: nn.TrainConfig = nn.TrainConfig(),
    portfolio: PortfolioSpec | None = None,
    stride: int = 21,
    threads: int = 1,
    confidence: float = 0.95,
    on_model: Callable[[int, nn.AeModel], None] | None = None,
) -> list[WindowResult]:
    spec = spec or StressSpec.multi(AE_MULTI_DELTA)
    ctx = _context(r, portfolio, confidence)

    def one(view: WindowView) -> WindowResult:
        try:
            model, latents, recon = ae_window(view, d, cfg, r.tickers)
            if on_model is not None:
                on_model(view.index, model)
            return _window_result(view, spec, stress_latents(latents, recon, spec, ctx)[2])
        except (ValueError, nn.TrainingDivergence, DataError) as exc:
            return _failed(view, spec, exc)

    return _pmap(one, rolling_windows(r, w, stride), threads)


# --- VAE Monte Carlo ------------------------------------------------------------


def summarize_samples(samples: np.ndarray, bins: int = HIST_BINS) -> dict:
    samples = np.asarray(samples, dtype=float)
    k = tail_count(samples.size, 0.95)
    lo, hi = float(samples.min()), float(samples.max())
    counts, edges = np.histogram(samples, bins=bins, range=(lo, hi))
    skew = float(stats.skew(samples, bias=False)) if samples.std() > 0 else 0.0
    return dict(
        mean=float(samples.mean()),
        std=float(samples.std(ddof=1)),
        skewness=skew,
        q05=float(np.partition(samples, k - 1)[k - 1]),
        hist_edges=edges,
        hist_counts=counts,
    )


def vae_mc_window(
    view: WindowView,
    d: int,
    M: int,
    cfg: nn.TrainConfig,
    portfolio: PortfolioSpec,
    seed: int,
    tickers=None,
    kl_weight: float | None = None,
    on_model: Callable[[int, nn.VaeModel], None] | None = None,
) -> np.ndarray:
    """M portfolio returns drawn from the window's VAE posterior mixture.

    Each draw picks a day of the window uniformly, samples its latent
    posterior, decodes and maps back to the return scale.
    """
    scaler = fit_standardizer(view, tickers)
    Z = standardize(view.values, scaler)
    model = nn.train_vae(Z, replace(cfg, seed=cfg.seed + view.index), kl_weight=kl_weight, d=d)
    if on_model is not None:
        on_model(view.index, model)
    mu, log_var = nn.vae_encode(model, Z)
    rng = np.random.default_rng(seed + view.index)
    rows = rng.integers(0, Z.shape[0], size=M)
    eps = rng.standard_normal((M, d))
    z = nn.sample_latent(mu[rows], log_var[rows], eps)
    R = destandardize(nn.vae_decode(model, z), scaler)
    return portfolio_returns(R, portfolio)


def run_vae_mc(
    r: ReturnMatrix,
    w: int = 504,
    d: int = 5,
    M: int = 1000,
    cfg: nn.TrainConfig = nn.TrainConfig(),
    portfolio: PortfolioSpec | None = None,
    stride: int = 21,
    seed: int = 0,
    threads: int = 1,
    kl_weight: float | None = None,
    on_model: Callable[[int, nn.VaeModel], None] | None = None,
) -> list[McResult]:
    if M < 1:
        raise ValueError("M must be >= 1")
    ctx = _context(r, portfolio, 0.95)

    def one(view: WindowView) -> McResult:
        s, e = _dates(view)
        try:
            samples = vae_mc_window(view, d, M, cfg, ctx.portfolio, seed, r.tickers, kl_weight, on_model)
            if not np.all(np.isfinite(samples)):
                raise nn.TrainingDivergence("non-finite Monte Carlo samples")
            return McResult(view.index, s, e, samples, **summarize_samples(samples))
        except (ValueError, nn.TrainingDivergence, DataError) as exc:
            log.warning("window %d skipped: %s", view.index, exc)
            empty = np.empty(0)
            return McResult(view.index, s, e, empty, np.nan, np.nan, np.nan, np.nan, empty, empty,
                            error=f"{type(exc).__name__}: {exc}")

    return _pmap(one, rolling_windows(r, w, stride), threads)


# --- attribution ----------------------------------------------------------------


def crisis_window(r: ReturnMatrix, w: int, crisis: str | tuple[str, str] | None) -> WindowView:
    """The length-``w`` window ending on the last trading day of the crisis
    range (or the last ``w`` rows when ``crisis`` is None)."""
    T = r.values.shape[0]
    if w > T:
        raise DataError(f"window length {w} exceeds series length {T}")
    if crisis is None:
        stop = T
    else:
        lo, hi = CRISES[crisis] if isinstance(crisis, str) else crisis
        lo, hi = np.datetime64(lo, "D"), np.datetime64(hi, "D")
        if lo < r.dates[0] or hi > r.dates[-1] or lo > hi:
            raise DataError(f"crisis range {lo}..{hi} not within data {r.dates[0]}..{r.dates[-1]}")
        stop = int(np.searchsorted(r.dates, hi, side="right"))
        if stop < w:
            raise DataError(f"only {stop} rows up to {hi}; need a full window of {w}")
    start = stop - w
    return WindowView(0, start, w, r.values[start:stop], r.dates[start:stop])


def attribution_for_window(
    view: WindowView,
    kind: str,
    ctx: StressContext,
    d: int = 5,
    k: float = 2.0,
    cfg: nn.TrainConfig = nn.TrainConfig(),
    tickers=None,
) -> list[AttributionRow]:
    """Stress each latent dimension alone by +k sigma on one fitted window."""
    if kind == "pca":
        _, latents, recon = pca_window(view, d)
        prefix = "PC"
    elif kind == "ae":
        _, latents, recon = ae_window(view, d, cfg, tickers)
        prefix = "Z"
    else:
        raise ValueError(f"attribution supports 'pca' or 'ae', not {kind!r}")
    rows = []
    for i in range(d):
        dlt = stress_latents(latents, recon, StressSpec.single(i, d, k), ctx)[2][2]
        rows.append(AttributionRow(f"{prefix}{i + 1}", dlt.d_var, dlt.d_es, dlt.d_drawdown))
    return rows


def component_attribution(
    r: ReturnMatrix,
    kind: str,
    crisis: str | tuple[str, str] | None = "gfc2008",
    k: float = 2.0,
    d: int = 5,
    w: int | None = None,
    cfg: nn.TrainConfig = nn.TrainConfig(),
    portfolio: PortfolioSpec | None = None,
    confidence: float = 0.95,
) -> list[AttributionRow]:
    view = crisis_window(r, w or DEFAULT_WINDOW[kind], crisis)
    return attribution_for_window(view, kind, _context(r, portfolio, confidence), d, k, cfg, r.tickers)
