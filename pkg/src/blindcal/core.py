"""Dense complex linear-algebra kernels used throughout the package.

Conventions: vectors are 1-D ``complex128`` arrays, matrices are square 2-D
arrays. ``f`` sequences hold the first column of a Hermitian Toeplitz matrix,
so ``f[0]`` sits on the main diagonal and ``f[k]`` on the k-th sub-diagonal.
"""

from functools import lru_cache

import numpy as np

from .errors import NotHermitian

HERMITIAN_RTOL = 1e-10


@lru_cache(maxsize=None)
def _toeplitz_index(n):
    idx = np.arange(n)
    d = idx[:, None] - idx[None, :]
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def _toeplitz_tables(n):
    d = _toeplitz_index(n)
    absd = np.abs(d)
    upper = d < 0
    absd.setflags(write=False)
    upper.setflags(write=False)
    return absd, upper


def toeplitz(f):
    """Hermitian Toeplitz matrix with first column ``f``.

    Entry (m, n) is ``f[m - n]`` on and below the diagonal and
    ``conj(f[n - m])`` above it.
    """
    f = np.asarray(f, dtype=complex)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("f must be a 1-D sequence of length >= 2")
    absd, upper = _toeplitz_tables(f.size)
    T = f[absd]
    np.conjugate(T, out=T, where=upper)
    return T


def first_column(M):
    """Inverse of :func:`toeplitz` for a matrix already known to be Toeplitz."""
    M = np.asarray(M, dtype=complex)
    f = M[:, 0].copy()
    f[0] = f[0].real
    return f


def diagonal_means(M):
    """Average of each sub-diagonal: ``out[k] = mean(diag(M, -k))``."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    return np.array([np.diagonal(M, -k).mean() for k in range(n)])


@lru_cache(maxsize=None)
def _upper_offsets(n):
    d = -_toeplitz_index(n)
    mask = d >= 0
    return d[mask], mask


def toeplitz_adjoint(X):
    """Adjoint-type operator pairing with :func:`toeplitz`.

    ``out[k] = sum(diag(X, k)) + sum(diag(conj(X), -k))``. With
    ``h(f) = <T(f), X> + <X, T(f)>`` this is the derivative of ``h`` in each
    coordinate: the ordinary derivative for the real ``f[0]`` and the
    Wirtinger derivative d/df_k for k >= 1.
    """
    X = np.asarray(X, dtype=complex)
    n = X.shape[0]
    if X.shape != (n, n):
        raise ValueError("X must be square")
    # diag(conj X, -k) is the conjugate transpose's k-th super-diagonal
    Y = X + X.conj().T
    offsets, mask = _upper_offsets(n)
    vals = Y[mask]
    out = np.bincount(offsets, weights=vals.real, minlength=n) + 1j * np.bincount(
        offsets, weights=vals.imag, minlength=n
    )
    out[0] = out[0].real
    return out


def sandwich(g, M, h):
    """``diag(g) @ M @ diag(conj(h))`` without forming the diagonal matrices."""
    g = np.asarray(g, dtype=complex)
    h = np.asarray(h, dtype=complex)
    M = np.asarray(M, dtype=complex)
    if M.shape != (g.size, h.size):
        raise ValueError(f"shape mismatch: M {M.shape}, g {g.size}, h {h.size}")
    return g[:, None] * M * np.conj(h)[None, :]


def is_hermitian(M, rtol=HERMITIAN_RTOL):
    M = np.asarray(M)
    scale = np.linalg.norm(M)
    return np.linalg.norm(M - M.conj().T) <= rtol * max(scale, np.finfo(float).tiny)


def hermitian_eig(M, check=True):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.

    Returns ``(eigenvalues, V)`` with ``M @ V = V @ diag(eigenvalues)``.
    Eigenvector phases are whatever LAPACK returns.
    """
    M = np.asarray(M, dtype=complex)
    if check and not is_hermitian(M):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    # symmetrise away round-off before handing to LAPACK
    w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    return w[::-1].copy(), V[:, ::-1].copy()
