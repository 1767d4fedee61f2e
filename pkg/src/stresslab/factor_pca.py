"""Windowed PCA via eigendecomposition of the sample covariance."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .market_data import WindowView

# relative eigenvalue gap below which two components count as tied
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class PcaModel:
    means: np.ndarray  # (N,)
    loadings: np.ndarray  # (N, d), orthonormal columns
    explained_variance: np.ndarray  # (d,), descending
    total_variance: float

    @property
    def d(self) -> int:
        return self.loadings.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance == 0:
            return np.zeros(self.d)
        return self.explained_variance / self.total_variance


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # first index wins on exactly equal magnitudes
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def fit_pca(window: WindowView | np.ndarray, d: int) -> PcaModel:
    """Top-``d`` principal directions of a raw (non-standardized) window.

    Loadings are sign-normalized so each column's largest-magnitude entry is
    positive. Components with (near-)equal variance are ordered by the asset
    index of their largest loading.
    """
    X = window.values if isinstance(window, WindowView) else np.asarray(window, dtype=float)
    w, N = X.shape
    if not 1 <= d <= min(w - 1, N):
        raise ValueError(f"d={d} must satisfy 1 <= d <= min(w-1, N) = {min(w - 1, N)}")
    means = X.mean(axis=0)
    Xc = X - means
    cov = Xc.T @ Xc / (w - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals, 0.0, None)
    evecs = _fix_signs(evecs)

    scale = max(float(evals.max()), np.finfo(float).tiny)
    lead = np.argmax(np.abs(evecs), axis=0)
    # bucket eigenvalues so ties compare equal, then break by lead asset index
    key_val = np.round(evals / scale / _TIE_RTOL)
    order = np.lexsort((lead, -key_val))[:d]
    return PcaModel(means, evecs[:, order].copy(), evals[order].copy(), float(np.trace(cov)))


def _check(model: PcaModel, A: np.ndarray, cols: int, what: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != cols:
        raise ValueError(f"{what} must have {cols} columns, got shape {A.shape}")
    return A


def transform(model: PcaModel, X: np.ndarray) -> np.ndarray:
    X = _check(model, X, model.loadings.shape[0], "X")
    return (X - model.means) @ model.loadings


def inverse_transform(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    scores = _check(model, scores, model.d, "scores")
    return scores @ model.loadings.T + model.means


def dump_model_csv(model: PcaModel, tickers, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", *[f"PC{j + 1}" for j in range(model.d)]])
        for t, row in zip(tickers, model.loadings):
            w.writerow([t, *(repr(float(x)) for x in row)])
        w.writerow(["explained_variance", *(repr(float(x)) for x in model.explained_variance)])
