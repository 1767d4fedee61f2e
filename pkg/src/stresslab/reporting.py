"""CSV writers and the run manifest.

Floats are written with ``repr`` (shortest round-trip decimal) and files use
``\\n`` line endings, so identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .diagnostics import AdfResult, DescriptiveStats, GarchFit, SectorCorrelation
from .pipelines import AttributionRow, McResult, WindowResult


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if np.isnan(x) else repr(x)
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# --- pipeline outputs -----------------------------------------------------------

WINDOW_HEADER = [
    "window", "start_date", "end_date", "stress", "status",
    "base_var", "base_es", "base_dd", "stressed_var", "stressed_es", "stressed_dd",
    "d_var", "d_es", "d_dd",
]


def write_window_results(results: Sequence[WindowResult], out: Path) -> list[Path]:
    rows, shift_rows = [], []
    sectors = next((list(r.sector_shift) for r in results if r.ok), [])
    for r in results:
        head = [r.index, r.start_date, r.end_date, r.spec.label(), "ok" if r.ok else "skipped"]
        if r.ok:
            b, s, d = r.baseline, r.stressed, r.delta
            rows.append(head + [b.var_95, b.es_95, b.max_drawdown, s.var_95, s.es_95, s.max_drawdown,
                                d.d_var, d.d_es, d.d_drawdown])
            shift_rows.append([r.index, r.start_date, r.end_date, *(r.sector_shift[k] for k in sectors)])
        else:
            rows.append(head + [None] * 9)
    return [
        write_csv(out / "window_results.csv", WINDOW_HEADER, rows),
        write_csv(out / "sector_shifts.csv", ["window", "start_date", "end_date", *sectors], shift_rows),
    ]


def write_attribution(rows: Sequence[AttributionRow], start_date: str, end_date: str, out: Path) -> Path:
    return write_csv(
        out / "attribution.csv",
        ["factor", "d_var", "d_es", "d_drawdown", "start_date", "end_date"],
        ([a.factor, a.d_var, a.d_es, a.d_drawdown, start_date, end_date] for a in rows),
    )


def write_mc(results: Sequence[McResult], out: Path) -> list[Path]:
    samples, hist, summary = [], [], []
    for r in results:
        status = "ok" if r.ok else "skipped"
        summary.append([r.index, r.start_date, r.end_date, status, r.samples.size, r.mean, r.std, r.skewness, r.q05])
        samples += [[r.index, m, x] for m, x in enumerate(r.samples)]
        hist += [[r.index, b, r.hist_edges[b], r.hist_edges[b + 1], c] for b, c in enumerate(r.hist_counts)]
    return [
        write_csv(out / "mc_samples.csv", ["window", "sample", "portfolio_return"], samples),
        write_csv(out / "mc_hist.csv", ["window", "bin", "left", "right", "count"], hist),
        write_csv(out / "mc_summary.csv",
                  ["window", "start_date", "end_date", "status", "samples", "mean", "std", "skewness", "q05"], summary),
    ]


# --- EDA outputs ----------------------------------------------------------------


def write_eda(
    stats: DescriptiveStats,
    corr: SectorCorrelation,
    adf: dict[str, AdfResult],
    garch: dict[str, GarchFit],
    out: Path,
) -> list[Path]:
    return [
        write_csv(out / "stats.csv", ["ticker", "mean", "std", "skew"],
                  zip(stats.tickers, stats.mean, stats.std, stats.skew)),
        write_csv(out / "sector_corr.csv", ["sector", *corr.sectors],
                  ([s, *row] for s, row in zip(corr.sectors, corr.matrix))),
        write_csv(out / "adf.csv",
                  ["ticker", "statistic", "lag", "nobs", "reject_1", "reject_5", "reject_10", "p_low", "p_high"],
                  ([t, a.statistic, a.lag, a.nobs, a.reject_1, a.reject_5, a.reject_10, *a.pvalue_interval]
                   for t, a in adf.items())),
        write_csv(out / "garch.csv", ["ticker", "omega", "alpha", "beta", "persistence", "converged", "loglik"],
                  ([t, g.omega, g.alpha, g.beta, g.persistence, g.converged, g.loglik] for t, g in garch.items())),
    ]


# --- manifest -------------------------------------------------------------------


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins timestamps for reproducible output trees
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def write_manifest(out: Path, config: dict, inputs: Sequence[str | Path], windows: list[dict], started: str) -> Path:
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "artifact": "stresslab",
        "version": __version__,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {name: sha256(out / name) for name in files},
        "windows": windows,
        "started": started,
        "finished": _timestamp(),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def verify_manifest(out: Path) -> list[str]:
    """Problems found comparing an output directory against its manifest."""
    manifest = json.loads((out / "manifest.json").read_text())
    problems = []
    listed = manifest["outputs"]
    for p in sorted(out.iterdir()):
        if p.is_file() and p.name != "manifest.json" and p.name not in listed:
            problems.append(f"{p.name}: not listed in manifest")
    for name, digest in listed.items():
        if not (out / name).exists():
            problems.append(f"{name}: missing")
        elif sha256(out / name) != digest:
            problems.append(f"{name}: digest mismatch")
    return problems
