"""Price ingestion, returns, per-window standardization, rolling windows and
a synthetic factor/GARCH market generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised for malformed or unusable market data."""


class DegenerateColumnError(DataError):
    pass


@dataclass(frozen=True)
class PriceTable:
    dates: np.ndarray  # datetime64[D]
    tickers: list[str]
    sectors: dict[str, str]
    prices: np.ndarray  # T x N

    def __post_init__(self):
        if self.prices.ndim != 2 or self.prices.shape[1] != len(self.tickers):
            raise DataError("price matrix columns do not match tickers")
        if len(self.dates) != self.prices.shape[0]:
            raise DataError("price matrix rows do not match dates")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise DataError("dates must be strictly increasing")
        missing = [t for t in self.tickers if t not in self.sectors]
        if missing:
            raise DataError(f"tickers without sector: {missing}")

    @property
    def sector_labels(self) -> list[str]:
        return sorted({self.sectors[t] for t in self.tickers})


@dataclass(frozen=True)
class ReturnMatrix:
    dates: np.ndarray
    tickers: list[str]
    sectors: dict[str, str]
    values: np.ndarray  # T x N simple returns

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def sector_labels(self) -> list[str]:
        return sorted({self.sectors[t] for t in self.tickers})

    def sector_columns(self) -> dict[str, np.ndarray]:
        """Column indices of each sector's members, keyed by sorted sector label."""
        out = {}
        for s in self.sector_labels:
            out[s] = np.array([j for j, t in enumerate(self.tickers) if self.sectors[t] == s])
        return out


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        if np.any(~(self.stds > 0)):
            raise DegenerateColumnError("standardizer stds must be strictly positive")


@dataclass(frozen=True)
class WindowView:
    index: int
    start: int
    length: int
    values: np.ndarray  # length x N view into the return matrix
    dates: np.ndarray

    def __post_init__(self):
        if self.length < 2:
            raise DataError("window length must be >= 2")

    @property
    def stop(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float

    def validate(self, allow_zero_omega: bool = False) -> None:
        ok_omega = self.omega >= 0 if allow_zero_omega else self.omega > 0
        if not (ok_omega and self.alpha >= 0 and self.beta >= 0 and self.alpha + self.beta < 1):
            raise ValueError(
                f"invalid GARCH(1,1) parameters omega={self.omega}, alpha={self.alpha}, beta={self.beta}: "
                "need omega > 0, alpha >= 0, beta >= 0, alpha + beta < 1"
            )

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class SynthSpec:
    """Factor model with GARCH(1,1) idiosyncratic noise.

    ``loadings`` is N x f. ``sector_of`` optionally pins each asset's sector
    index; by default assets are split into K contiguous blocks.
    """

    assets: int = 25
    sectors: int = 5
    days: int = 2000
    loadings: np.ndarray | None = None
    factor_vols: Sequence[float] = (0.01,)
    garch: GarchParams = field(default_factory=lambda: GarchParams(2e-6, 0.08, 0.90))
    seed: int = 0
    start_date: str = "2004-01-01"
    sector_of: Sequence[int] | None = None

    def resolved_loadings(self) -> np.ndarray:
        if self.loadings is None:
            return np.ones((self.assets, len(self.factor_vols)))
        L = np.asarray(self.loadings, dtype=float)
        if L.ndim == 1:
            L = L[:, None]
        return L


# --- ingestion ---------------------------------------------------------------


def read_sector_map(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["ticker", "sector"]:
            raise DataError(f"{path}: sector map header must be 'ticker,sector'")
        for row in reader:
            ticker, sector = (row["ticker"] or "").strip(), (row["sector"] or "").strip()
            if not ticker or not sector:
                raise DataError(f"{path}: empty ticker or sector in row {row}")
            if ticker in out:
                raise DataError(f"{path}: duplicate ticker {ticker}")
            out[ticker] = sector
    return out


def clean_prices(prices: np.ndarray) -> tuple[np.ndarray, int]:
    """Forward-fill interior gaps and drop leading rows with any missing value.

    Returns the cleaned matrix and the number of leading rows dropped.
    """
    P = np.array(prices, dtype=float)
    if P.size and np.any(np.all(np.isnan(P), axis=0)):
        raise DataError("a price column is entirely missing")
    complete = ~np.any(np.isnan(P), axis=1)
    if not complete.any():
        raise DataError("no complete row to start from")
    first = int(np.argmax(complete))
    P = P[first:]
    P = pd.DataFrame(P).ffill().to_numpy()
    if np.any(~np.isfinite(P)) or np.any(P <= 0):
        raise DataError("prices must be finite and strictly positive after cleaning")
    return P, first


def ingest_prices(path: str | Path, sector_map_path: str | Path) -> PriceTable:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: malformed CSV ({exc})") from exc
    if df.columns.size < 2 or df.columns[0].strip() != "date":
        raise DataError(f"{path}: header must start with 'date'")
    tickers = [c.strip() for c in df.columns[1:]]
    if len(set(tickers)) != len(tickers):
        raise DataError(f"{path}: duplicate ticker columns")
    try:
        dates = pd.to_datetime(df.iloc[:, 0].str.strip(), format="%Y-%m-%d").to_numpy().astype("datetime64[D]")
    except ValueError as exc:
        raise DataError(f"{path}: bad date ({exc})") from exc
    if len(dates) > 1 and not np.all(np.diff(dates) > np.timedelta64(0, "D")):
        raise DataError(f"{path}: dates must be strictly increasing")
    try:
        cells = np.char.strip(df.iloc[:, 1:].to_numpy(dtype=str))
        raw = np.where(cells == "", "nan", cells).astype(float).reshape(len(dates), len(tickers))
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric price ({exc})") from exc

    sectors = read_sector_map(sector_map_path)
    missing = [t for t in tickers if t not in sectors]
    if missing:
        raise DataError(f"tickers without sector in {sector_map_path}: {missing}")

    P, dropped = clean_prices(raw)
    return PriceTable(dates[dropped:], tickers, {t: sectors[t] for t in tickers}, P)


def write_prices(table: PriceTable, prices_path: str | Path, sectors_path: str | Path) -> None:
    with open(prices_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *table.tickers])
        for d, row in zip(table.dates, table.prices):
            w.writerow([str(d), *(repr(float(x)) for x in row)])
    with open(sectors_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "sector"])
        for t in table.tickers:
            w.writerow([t, table.sectors[t]])


# --- returns and standardization ----------------------------------------------


def compute_returns(p: PriceTable) -> ReturnMatrix:
    if p.prices.shape[0] < 2:
        raise DataError("need at least two price rows to compute returns")
    values = p.prices[1:] / p.prices[:-1] - 1.0
    return ReturnMatrix(p.dates[1:], list(p.tickers), dict(p.sectors), values)


def prices_from_returns(r: np.ndarray, base: np.ndarray | float) -> np.ndarray:
    """Rebuild a price path (including the base row) from simple returns."""
    base = np.broadcast_to(np.asarray(base, dtype=float), (r.shape[1],))
    return np.vstack([base, base * np.cumprod(1.0 + r, axis=0)])


def fit_standardizer(window: WindowView | np.ndarray, tickers: Sequence[str] | None = None) -> Standardizer:
    X = window.values if isinstance(window, WindowView) else np.asarray(window, dtype=float)
    if X.shape[0] < 2:
        raise DataError("standardizer needs at least two rows")
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(stds > 0))
    if bad.size:
        names = [tickers[j] if tickers is not None else f"column {j}" for j in bad]
        raise DegenerateColumnError(f"zero variance in window for {', '.join(map(str, names))}")
    return Standardizer(means, stds)


def _check_cols(X: np.ndarray, s: Standardizer) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != s.means.shape[0]:
        raise ValueError(f"expected {s.means.shape[0]} columns, got {X.shape[-1]}")
    return X


def standardize(X: np.ndarray, s: Standardizer) -> np.ndarray:
    return (_check_cols(X, s) - s.means) / s.stds


def destandardize(Z: np.ndarray, s: Standardizer) -> np.ndarray:
    return _check_cols(Z, s) * s.stds + s.means


def rolling_windows(r: ReturnMatrix | np.ndarray, w: int, stride: int = 21) -> list[WindowView]:
    """Windows starting at 0, stride, 2*stride, ... plus a terminal window
    ending at the last row when the stride does not land on it."""
    values = r.values if isinstance(r, ReturnMatrix) else np.asarray(r)
    dates = r.dates if isinstance(r, ReturnMatrix) else np.arange(values.shape[0])
    T = values.shape[0]
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if w > T:
        raise DataError(f"window length {w} exceeds series length {T}")
    starts = list(range(0, T - w + 1, stride))
    if starts[-1] != T - w:
        starts.append(T - w)
    return [WindowView(i, s, w, values[s : s + w], dates[s : s + w]) for i, s in enumerate(starts)]


# --- synthetic market ---------------------------------------------------------


def garch_noise(params: GarchParams, T: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """T x n independent GARCH(1,1) paths started at the unconditional variance."""
    eps = np.zeros((T, n))
    if params.omega == 0:
        return eps
    z = rng.standard_normal((T, n))
    var = np.full(n, params.unconditional_variance)
    for t in range(T):
        eps[t] = np.sqrt(var) * z[t]
        var = params.omega + params.alpha * eps[t] ** 2 + params.beta * var
    return eps


def generate_synthetic(spec: SynthSpec) -> PriceTable:
    spec.garch.validate(allow_zero_omega=True)
    L = spec.resolved_loadings()
    if L.shape != (spec.assets, len(spec.factor_vols)):
        raise ValueError(f"loadings shape {L.shape} does not match ({spec.assets}, {len(spec.factor_vols)})")
    if not np.all(np.isfinite(L)):
        raise ValueError("loadings must be finite")
    if spec.sectors < 1 or spec.sectors > spec.assets:
        raise ValueError("need 1 <= sectors <= assets")
    rng = np.random.default_rng(spec.seed)
    f = rng.standard_normal((spec.days, L.shape[1])) * np.asarray(spec.factor_vols, dtype=float)
    eps = garch_noise(spec.garch, spec.days, spec.assets, rng)
    r = f @ L.T + eps
    if np.any(r <= -1):
        raise ValueError("synthetic returns reached -100%; reduce volatility")
    prices = prices_from_returns(r, 100.0)

    start = np.datetime64(spec.start_date, "D")
    dates = np.busday_offset(start, np.arange(spec.days + 1), roll="forward")
    width = max(2, int(math.log10(spec.assets)) + 1)
    tickers = [f"A{j:0{width}d}" for j in range(spec.assets)]
    if spec.sector_of is None:
        sector_of = [j * spec.sectors // spec.assets for j in range(spec.assets)]
    else:
        sector_of = list(spec.sector_of)
    sectors = {t: f"S{s}" for t, s in zip(tickers, sector_of)}
    return PriceTable(dates, tickers, sectors, prices)


def load_synth_spec(path: str | Path) -> SynthSpec:
    """Read a synthetic-market TOML file (keys: assets, sectors, days, seed,
    garch = {omega, alpha, beta}, loadings = "random" | matrix, factor_vols)."""
    from .config import load_toml

    data = load_toml(path)
    allowed = {"assets", "sectors", "days", "seed", "garch", "loadings", "factor_vols", "start_date"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown synth keys: {sorted(unknown)}")
    assets = int(data.get("assets", 25))
    vols = tuple(float(v) for v in data.get("factor_vols", [0.01]))
    seed = int(data.get("seed", 0))
    g = data.get("garch", {})
    garch = GarchParams(float(g.get("omega", 2e-6)), float(g.get("alpha", 0.08)), float(g.get("beta", 0.90)))
    raw = data.get("loadings", "random")
    if isinstance(raw, str):
        if raw != "random":
            raise ValueError("loadings must be 'random' or a matrix")
        loadings = random_loadings(assets, len(vols), seed)
    else:
        loadings = np.asarray(raw, dtype=float)
    return SynthSpec(
        assets=assets,
        sectors=int(data.get("sectors", 5)),
        days=int(data.get("days", 2000)),
        loadings=loadings,
        factor_vols=vols,
        garch=garch,
        seed=seed,
        start_date=str(data.get("start_date", "2004-01-01")),
    )


def random_loadings(n: int, f: int, seed: int) -> np.ndarray:
    """Market factor loadings in [0.5, 1.5]; further factors N(0, 0.5^2)."""
    rng = np.random.default_rng([seed, 7919])
    L = rng.normal(0.0, 0.5, size=(n, f))
    L[:, 0] = rng.uniform(0.5, 1.5, size=n)
    return L
