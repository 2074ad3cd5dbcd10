"""MUSIC frequency localization on the continuous torus.

The imaging function is ``J(w) = |phi(w)| / |V2^* phi(w)|`` where ``V2`` spans
the noise subspace and ``phi(w) = (1, e^{2 pi i w}, ..., e^{2 pi i (N-1) w})``.
Its reciprocal ``R = 1/J`` is the noise-space correlation.
"""

from dataclasses import dataclass

import numpy as np

from .core import hermitian_eig
from .errors import InsufficientPeaks, SparsityTooLarge

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
ROOT_RTOL = 1e-14


@dataclass(frozen=True)
class NoiseSubspace:
    basis: np.ndarray
    signal_eigenvalues: np.ndarray

    @property
    def N(self):
        return self.basis.shape[0]


@dataclass(frozen=True)
class PeakSet:
    omegas: np.ndarray
    peak_values: np.ndarray
    grid_size: int
    refined: bool
    found: int
    degraded: bool = False


def default_grid_size(N):
    return max(4096, 16 * N)


def noise_subspace(F, s):
    F = np.asarray(F, dtype=complex)
    N = F.shape[0]
    if s >= N:
        raise SparsityTooLarge(f"s={s} must be smaller than N={N}")
    lam, V = hermitian_eig(F)
    return NoiseSubspace(basis=V[:, s:], signal_eigenvalues=lam[:s])


def _steering(omega, N):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    return np.exp(2j * np.pi * np.arange(N)[:, None] * omega[None, :])


def imaging_denominator(sub, omega):
    """``|V2^* phi(w)|`` for a scalar or array of frequencies."""
    proj = sub.basis.conj().T @ _steering(omega, sub.N)
    out = np.linalg.norm(proj, axis=0)
    return out[0] if np.ndim(omega) == 0 else out


def imaging_function(sub, omega):
    """``J(w)``; exact roots (denominator below ``1e-14 sqrt(N)``) give ``inf``."""
    den = np.atleast_1d(imaging_denominator(sub, omega))
    root = np.sqrt(sub.N)
    with np.errstate(divide="ignore"):
        J = np.where(den < ROOT_RTOL * root, np.inf, root / den)
    return J[0] if np.ndim(omega) == 0 else J


def noise_correlation(sub, omega):
    """``R(w) = 1/J(w)`` in ``[0, 1]``, computed without the division."""
    return np.minimum(imaging_denominator(sub, omega) / np.sqrt(sub.N), 1.0)


def grid_denominator(sub, grid_size):
    """``|V2^* phi|`` on the uniform grid ``k / grid_size`` via an FFT."""
    coeffs = np.fft.ifft(sub.basis.conj(), n=grid_size, axis=0) * grid_size
    return np.linalg.norm(coeffs, axis=1)


def imaging_on_grid(sub, grid_size):
    den = grid_denominator(sub, grid_size)
    root = np.sqrt(sub.N)
    with np.errstate(divide="ignore"):
        return np.where(den < ROOT_RTOL * root, np.inf, root / den)


def _golden_max(fun, lo, hi, tol):
    """Golden-section search for the maximum of a unimodal ``fun`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def find_peaks(sub, s, grid_size=None, refine_tol=1e-10, refine=True, strict=False):
    """The ``s`` largest local maxima of ``J`` on the torus, refined off-grid.

    Local maxima are grid points strictly above both cyclic neighbours. Each
    selected peak is refined by golden-section ascent within one grid cell on
    either side. If fewer than ``s`` maxima exist the remaining slots are
    filled with the largest other grid values and ``degraded`` is set, or
    :class:`InsufficientPeaks` is raised when ``strict``.
    """
    N = sub.N
    grid_size = grid_size or default_grid_size(N)
    if grid_size < 8 * N:
        raise ValueError(f"grid_size must be >= 8N = {8 * N}")
    J = imaging_on_grid(sub, grid_size)
    is_max = (J > np.roll(J, 1)) & (J > np.roll(J, -1))
    cand = np.flatnonzero(is_max)
    grid = np.arange(grid_size) / grid_size
    # descending J, ties to the smaller frequency
    cand = cand[np.lexsort((grid[cand], -J[cand]))]
    found = cand.size
    degraded = found < s
    if degraded:
        if strict:
            raise InsufficientPeaks(found, s)
        rest = np.setdiff1d(np.arange(grid_size), cand)
        rest = rest[np.lexsort((grid[rest], -J[rest]))]
        cand = np.concatenate([cand, rest[: s - found]])
    chosen = cand[:s]

    omegas = grid[chosen].copy()
    values = J[chosen].copy()
    if refine and s > 0:
        step = 1.0 / grid_size

        def J_at(w):
            return imaging_function(sub, np.mod(w, 1.0))

        for i, w0 in enumerate(omegas):
            w, v = _golden_max(J_at, w0 - step, w0 + step, refine_tol)
            if v >= values[i]:
                omegas[i], values[i] = np.mod(w, 1.0), v
    omegas = np.where(omegas >= 1.0, omegas - 1.0, omegas)
    order = np.argsort(omegas)
    return PeakSet(
        omegas=omegas[order],
        peak_values=values[order],
        grid_size=grid_size,
        refined=bool(refine),
        found=int(found),
        degraded=bool(degraded),
    )


def music(F, s, grid_size=None, refine_tol=1e-10):
    """Noise subspace of ``F`` followed by peak search; returns ``(PeakSet, NoiseSubspace)``."""
    sub = noise_subspace(F, s)
    return find_peaks(sub, s, grid_size=grid_size, refine_tol=refine_tol), sub
