"""Gaussian log-density kernels shared by the chain and weighting layers.

The isotropic case is closed-form (no factorisation); general
covariances go through a cached Cholesky factor. Batched variants
compute an (S, R) table of log N(x_s | mu_r, C) using one BLAS product,
which is what keeps dense mixture denominators affordable.
"""

from __future__ import annotations

import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)


def as_covariance(scale, dim: int) -> np.ndarray:
    """Normalise a proposal-scale spec to a (dim, dim) covariance.

    Accepts a scalar standard deviation, a (dim,) vector of standard
    deviations, or a full covariance matrix.
    """
    arr = np.asarray(scale, dtype=float)
    if arr.ndim == 0:
        if arr <= 0:
            raise ValueError("scale must be positive")
        return float(arr) ** 2 * np.eye(dim)
    if arr.ndim == 1:
        if arr.shape != (dim,) or np.any(arr <= 0):
            raise ValueError(f"per-axis scales must be {dim} positive values")
        return np.diag(arr**2)
    if arr.shape != (dim, dim):
        raise ValueError(f"covariance must be ({dim}, {dim})")
    return arr.copy()


def isotropic_sigma2(cov: np.ndarray) -> float | None:
    """Return sigma^2 when ``cov`` is sigma^2 * I, else None."""
    d = cov.shape[0]
    s2 = cov[0, 0]
    if np.array_equal(cov, s2 * np.eye(d)) and s2 > 0:
        return float(s2)
    return None


def gaussian_log_pdf(x, mean, cov) -> float:
    """log N(x | mean, cov); isotropic covariances avoid factorisation."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    d = x.size
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        s2 = float(cov)
        if s2 <= 0:
            raise ValueError("variance must be positive")
        diff = x - mean
        return float(-0.5 * d * (_LOG_2PI + np.log(s2)) - 0.5 * (diff @ diff) / s2)
    s2 = isotropic_sigma2(cov)
    if s2 is not None:
        diff = x - mean
        return float(-0.5 * d * (_LOG_2PI + np.log(s2)) - 0.5 * (diff @ diff) / s2)
    chol = np.linalg.cholesky(cov)
    sol = np.linalg.solve(chol, x - mean)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (d * _LOG_2PI + logdet + sol @ sol))


def iso_log_pdf_table(X: np.ndarray, MU: np.ndarray, sigma2: float) -> np.ndarray:
    """(S, R) table of log N(x_s | mu_r, sigma2 I) via one matmul."""
    X = np.asarray(X, dtype=float)
    MU = np.asarray(MU, dtype=float)
    d = X.shape[1]
    sq = (
        np.sum(X * X, axis=1)[:, None]
        - 2.0 * (X @ MU.T)
        + np.sum(MU * MU, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return -0.5 * d * (_LOG_2PI + np.log(sigma2)) - 0.5 * sq / sigma2


def full_log_pdf_table(X: np.ndarray, MU: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """(S, R) table of log N(x_s | mu_r, cov) for a shared dense cov."""
    X = np.asarray(X, dtype=float)
    MU = np.asarray(MU, dtype=float)
    d = X.shape[1]
    chol = np.linalg.cholesky(cov)
    Xw = np.linalg.solve(chol, X.T).T
    MUw = np.linalg.solve(chol, MU.T).T
    sq = (
        np.sum(Xw * Xw, axis=1)[:, None]
        - 2.0 * (Xw @ MUw.T)
        + np.sum(MUw * MUw, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * _LOG_2PI + logdet) - 0.5 * sq


def sample_gaussian(rng: np.random.Generator, mean: np.ndarray, chol: np.ndarray,
                    size: int) -> np.ndarray:
    """Draws from N(mean, L L^T) with a precomputed factor L."""
    z = rng.standard_normal((size, mean.size))
    return mean[None, :] + z @ chol.T
