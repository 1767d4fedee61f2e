import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stresslab.factor_pca import fit_pca, inverse_transform, transform


def rand_window(seed, w=120, n=8):
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(n, n))
    return rng.normal(size=(w, n)) @ mix * 0.01 + rng.normal(0, 0.001, n)


def svd_spectrum(X):
    """Independent oracle: score variances from the SVD of the centered window."""
    Xc = X - X.mean(0)
    s = np.linalg.svd(Xc, compute_uv=False)
    return s**2 / (X.shape[0] - 1)


@given(st.integers(0, 10_000), st.integers(1, 8))
@settings(max_examples=30, deadline=None)
def test_model_invariants(seed, d):
    X = rand_window(seed)
    m = fit_pca(X, d)
    assert np.max(np.abs(m.loadings.T @ m.loadings - np.eye(d))) <= 1e-8
    assert np.all(np.diff(m.explained_variance) <= 0) and m.explained_variance[-1] >= 0
    lead = m.loadings[np.argmax(np.abs(m.loadings), axis=0), np.arange(d)]
    assert np.all(lead > 0)
    assert m.explained_variance_ratio.sum() <= 1 + 1e-12


def test_rank_one_eigen_oracle():
    r1 = np.random.default_rng(0).normal(0, 0.01, 300)
    X = np.column_stack([r1, 2 * r1])
    m = fit_pca(X, 1)
    # 2x2 covariance v*[[1,2],[2,4]] has top eigenvector (1,2)/sqrt(5), eigenvalue 5v
    np.testing.assert_allclose(m.loadings[:, 0], np.array([1, 2]) / np.sqrt(5), atol=1e-6)
    assert abs(m.explained_variance_ratio[0] - 1.0) <= 1e-8
    assert m.explained_variance[0] == pytest.approx(5 * r1.var(ddof=1), rel=1e-10)


def test_full_rank_round_trip():
    X = rand_window(1)
    m = fit_pca(X, X.shape[1])
    assert np.max(np.abs(inverse_transform(m, transform(m, X)) - X)) <= 1e-8
    assert m.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-12)


def test_permutation_equivariance():
    X = rand_window(2)
    perm = np.random.default_rng(9).permutation(X.shape[1])
    a, b = fit_pca(X, 4), fit_pca(X[:, perm], 4)
    np.testing.assert_allclose(b.loadings, a.loadings[perm], atol=1e-10)


def test_scores_uncorrelated_with_eigen_variances():
    X = rand_window(3)
    m = fit_pca(X, 5)
    S = transform(m, X)
    C = np.corrcoef(S, rowvar=False)
    assert np.max(np.abs(C - np.eye(5))) < 1e-6
    np.testing.assert_allclose(S.var(0, ddof=1), m.explained_variance, rtol=0, atol=1e-8)
    np.testing.assert_allclose(m.explained_variance, svd_spectrum(X)[:5], rtol=1e-10)


def test_mean_rows_and_zero_scores():
    X = rand_window(4)
    m = fit_pca(X, 3)
    np.testing.assert_allclose(transform(m, np.tile(m.means, (4, 1))), 0.0, atol=1e-15)
    np.testing.assert_array_equal(inverse_transform(m, np.zeros((4, 3))), np.tile(m.means, (4, 1)))


@pytest.mark.parametrize("d", [1, 2, 4, 7])
def test_reconstruction_error_spectral_identity(d):
    X = rand_window(5)
    w = X.shape[0]
    m = fit_pca(X, d)
    err = np.sum((X - inverse_transform(m, transform(m, X))) ** 2)
    expected = svd_spectrum(X)[d:].sum() * (w - 1)
    assert err == pytest.approx(expected, rel=1e-6)


def test_reconstruction_error_non_increasing_in_d():
    X = rand_window(6)
    errs = [np.sum((X - inverse_transform(m, transform(m, X))) ** 2) for m in (fit_pca(X, d) for d in range(1, 9))]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_rank_deficient_window_completes_basis():
    r = np.random.default_rng(7).normal(size=(50, 2))
    X = np.column_stack([r[:, 0], r[:, 1], r[:, 0] + r[:, 1], 2 * r[:, 0]])  # rank 2
    m = fit_pca(X, 4)
    assert np.max(np.abs(m.loadings.T @ m.loadings - np.eye(4))) <= 1e-8
    assert np.all(m.explained_variance[2:] < 1e-12)
    assert m.explained_variance_ratio[:2].sum() == pytest.approx(1.0, abs=1e-10)


def test_deterministic_fit():
    X = rand_window(8)
    a, b = fit_pca(X, 5), fit_pca(X.copy(), 5)
    assert np.array_equal(a.loadings, b.loadings) and np.array_equal(a.explained_variance, b.explained_variance)


def test_equal_variance_ties_are_ordered_by_lead_asset():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(200, 3))
    Q, _ = np.linalg.qr(G - G.mean(0))
    X = Q * np.sqrt(199)  # centered orthogonal unit-variance columns: all eigenvalues tie
    m = fit_pca(X, 3)
    assert np.ptp(m.explained_variance) < 1e-12
    leads = np.argmax(np.abs(m.loadings), axis=0)
    assert list(leads) == sorted(leads)


@pytest.mark.parametrize("d", [0, 9])
def test_d_out_of_range(d):
    with pytest.raises(ValueError):
        fit_pca(rand_window(0), d)


def test_dimension_mismatch():
    m = fit_pca(rand_window(0), 2)
    with pytest.raises(ValueError):
        transform(m, np.zeros((3, 5)))
    with pytest.raises(ValueError):
        inverse_transform(m, np.zeros((3, 3)))
