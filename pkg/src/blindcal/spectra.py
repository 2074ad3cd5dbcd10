"""Empirical covariance, noise-level estimation and noise-floor removal."""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import hermitian_eig
from .errors import SparsityTooLarge

DIAGONAL_FLOOR = 1e-12


@dataclass(frozen=True)
class DenoisedCovariance:
    r_hat: np.ndarray
    sigma_hat: float
    l_used: int | None = None
    clamped: bool = False


def empirical_covariance(Y):
    """``(1/L) sum_t y(t) y(t)^*`` for an ``N x L`` snapshot matrix."""
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise ValueError("Y must be N x L with L >= 1")
    R = Y @ Y.conj().T / Y.shape[1]
    return 0.5 * (R + R.conj().T)


def estimate_noise_level(cov, s):
    """Root mean of the ``N - s`` smallest eigenvalues."""
    cov = np.asarray(cov, dtype=complex)
    N = cov.shape[0]
    if s >= N:
        raise SparsityTooLarge(f"s={s} must be smaller than N={N}")
    lam, _ = hermitian_eig(cov)
    return float(np.sqrt(max(lam[s:].sum() / (N - s), 0.0)))


def denoise(cov, s, l_used=None):
    """Subtract the estimated noise floor ``sigma_hat^2 I``.

    Diagonal entries that fall below ``1e-12 * trace / N`` afterwards are
    clamped to that floor and ``clamped`` is set, so amplitude extraction can
    always take square roots.
    """
    cov = np.asarray(cov, dtype=complex)
    sigma_hat = estimate_noise_level(cov, s)
    r_hat = cov - sigma_hat**2 * np.eye(cov.shape[0])
    diag = r_hat.diagonal().real
    floor = DIAGONAL_FLOOR * max(diag.sum(), 0.0) / diag.size
    low = diag < floor
    clamped = bool(low.any())
    if clamped:
        warnings.warn(f"{int(low.sum())} diagonal entries clamped after noise removal", RuntimeWarning)
        idx = np.flatnonzero(low)
        r_hat[idx, idx] = floor
    return DenoisedCovariance(r_hat=r_hat, sigma_hat=sigma_hat, l_used=l_used, clamped=clamped)
