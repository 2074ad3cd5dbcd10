"""Partial algebraic calibration.

Amplitudes come from the diagonal of the denoised covariance and phases from
ratios of consecutive first sub-diagonal entries, which yield a
second-difference linear system with no phase-wrapping interdependence.
The endpoint phases are pinned to zero, fixing the linear-phase gauge.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import sandwich
from .errors import NonPositiveDiagonal, SingularSystem, SparsityTooLarge, VanishingSubdiagonal
from .spectra import DenoisedCovariance, denoise, empirical_covariance

SUBDIAGONAL_RTOL = 1e-12


@dataclass(frozen=True)
class PhaseSystem:
    phi: np.ndarray
    b_hat: np.ndarray


@dataclass(frozen=True)
class AlgebraicOutput:
    g_hat: np.ndarray
    f_matrix: np.ndarray
    phase_system: PhaseSystem
    r_hat: np.ndarray
    sigma_hat: float = 0.0
    clamped: bool = False


def _as_matrix(r_hat):
    if isinstance(r_hat, DenoisedCovariance):
        return r_hat.r_hat
    return np.asarray(r_hat, dtype=complex)


def estimate_amplitudes(r_hat):
    diag = _as_matrix(r_hat).diagonal().real
    if np.any(diag <= 0):
        bad = int(np.flatnonzero(diag <= 0)[0])
        raise NonPositiveDiagonal(f"r_hat[{bad}][{bad}] = {diag[bad]:.3e}")
    return np.sqrt(diag)


def phase_matrix(N):
    """Second-difference matrix with ``1/N^2`` corner rows pinning both endpoints."""
    phi = np.zeros((N, N))
    phi[0, 0] = phi[N - 1, N - 1] = 1.0 / N**2
    r = np.arange(1, N - 1)
    phi[r, r - 1] = 1.0
    phi[r, r] = -2.0
    phi[r, r + 1] = 1.0
    return phi


def build_phase_system(r_hat):
    R = _as_matrix(r_hat)
    N = R.shape[0]
    sub = np.diagonal(R, -1)  # sub[n-1] = R[n, n-1]
    mags = np.abs(sub)
    tol = SUBDIAGONAL_RTOL * np.linalg.norm(R, 2)
    if np.any(mags < tol):
        n = int(np.argmax(mags < tol)) + 1
        raise VanishingSubdiagonal(n, float(mags[n - 1]))
    b_hat = np.zeros(N)
    # angle(R[n+1,n] / R[n,n-1]) for n = 1..N-2, principal value in (-pi, pi]
    ratio = sub[1:] * np.conj(sub[:-1])
    b_hat[1 : N - 1] = np.angle(ratio)
    b_hat[1 : N - 1][b_hat[1 : N - 1] == -np.pi] = np.pi
    return PhaseSystem(phi=phase_matrix(N), b_hat=b_hat)


def solve_phase_system(system):
    try:
        lu = scipy.linalg.lu_factor(system.phi, check_finite=True)
        with np.errstate(all="raise"):
            beta = scipy.linalg.lu_solve(lu, system.b_hat)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(beta)):
        raise SingularSystem("non-finite solution")
    # the corner rows involve a single unknown each; take them exactly so the
    # gauge beta[0] = beta[-1] = 0 carries no LU round-off
    for i in (0, -1):
        row = system.phi[i]
        if np.count_nonzero(row) == 1 and row[i] != 0:
            beta[i] = system.b_hat[i] / row[i]
    return beta


def calibrated_matrix(r_hat, g_hat):
    """``diag(g)^-1 r_hat diag(conj g)^-1``."""
    inv = 1.0 / np.asarray(g_hat, dtype=complex)
    return sandwich(inv, _as_matrix(r_hat), inv)


def prepare_r_hat(data, s, kind="auto"):
    """Run the covariance front end and return a :class:`DenoisedCovariance`.

    ``kind`` selects how ``data`` is read: ``"snapshots"`` (N x L matrix,
    empirical covariance then noise removal), ``"covariance"`` (noisy covariance, noise floor removed),
    ``"r_hat"`` (used as is). ``"auto"`` reads a square matrix as ``r_hat``
    and anything else as snapshots.
    """
    if isinstance(data, DenoisedCovariance):
        return data
    data = np.asarray(data, dtype=complex)
    if kind == "auto":
        kind = "r_hat" if data.ndim == 2 and data.shape[0] == data.shape[1] else "snapshots"
    if kind == "snapshots":
        if data.shape[0] <= s:
            raise SparsityTooLarge(f"need N >= s + 1, got N={data.shape[0]}, s={s}")
        return denoise(empirical_covariance(data), s, l_used=data.shape[1])
    if kind == "covariance":
        return denoise(data, s)
    if kind == "r_hat":
        return DenoisedCovariance(r_hat=data, sigma_hat=0.0)
    raise ValueError(f"unknown data kind {kind!r}")


def run_partial_algebraic(data, s, kind="auto"):
    """Partial algebraic method up to the calibrated matrix ``F_hat``.

    See :func:`prepare_r_hat` for the accepted inputs.
    """
    den = prepare_r_hat(data, s, kind)
    N = den.r_hat.shape[0]
    if N < s + 1:
        raise SparsityTooLarge(f"need N >= s + 1, got N={N}, s={s}")
    alpha = estimate_amplitudes(den)
    system = build_phase_system(den)
    beta = solve_phase_system(system)
    g_hat = alpha * np.exp(1j * beta)
    F = calibrated_matrix(den.r_hat, g_hat)
    F = 0.5 * (F + F.conj().T)
    return AlgebraicOutput(
        g_hat=g_hat,
        f_matrix=F,
        phase_system=system,
        r_hat=den.r_hat,
        sigma_hat=den.sigma_hat,
        clamped=den.clamped,
    )
