"""Computable theoretical quantities: error bounds and identifiability checks."""

from dataclasses import dataclass

import numpy as np

from .errors import BadK


@dataclass(frozen=True)
class BoundInputs:
    """Quantities entering the covariance-deviation bound.

    ``max_x_norm``, ``max_e_norm`` and ``max_xe_norm`` are maxima over the
    observed snapshots of ``|x(t)|``, ``|e(t)|`` and ``|x(t)| |e(t)|``; the last
    defaults to the product of the first two.
    """

    alpha_max: float
    gamma_max: float
    sigma_max_A: float
    sigma: float
    L: int
    N: int
    s: int
    max_x_norm: float
    max_e_norm: float
    max_xe_norm: float | None = None

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        for name in ("alpha_max", "gamma_max", "sigma_max_A", "sigma", "max_x_norm", "max_e_norm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_snapshots(cls, inst, X, E, A=None):
        """Fill the inputs from a ground-truth instance and its sampled parts."""
        from .model import steering_matrix

        if A is None:
            A = steering_matrix(inst.freq.omegas, inst.N)
        xn = np.linalg.norm(X, axis=0)
        en = np.linalg.norm(E, axis=0)
        return cls(
            alpha_max=float(np.abs(inst.cal.g).max()),
            gamma_max=float(inst.freq.gammas.max()),
            sigma_max_A=float(np.linalg.norm(A, 2)),
            sigma=float(inst.sigma),
            L=X.shape[1],
            N=inst.N,
            s=inst.freq.s,
            max_x_norm=float(xn.max()),
            max_e_norm=float(en.max()),
            max_xe_norm=float((xn * en).max()),
        )


def delta_ry_bound(b):
    """Expected spectral-norm deviation bound of the denoised covariance."""
    xe = b.max_xe_norm if b.max_xe_norm is not None else b.max_x_norm * b.max_e_norm
    sqL = np.sqrt(b.L)
    log4s = np.log(4 * b.s)
    logNs = np.log(b.N + b.s)
    log2N = np.log(2 * b.N)
    source = (
        2
        * b.alpha_max**2
        * b.sigma_max_A**2
        * (
            b.gamma_max * b.max_x_norm * np.sqrt(2 * log4s) / sqL
            + (b.gamma_max**2 + b.max_x_norm**2) * log4s / (3 * b.L)
        )
    )
    cross = (
        4
        * b.alpha_max
        * b.sigma_max_A
        * (b.sigma * b.gamma_max * np.sqrt(2 * b.N * logNs) / sqL + xe * logNs / (3 * b.L))
    )
    noise = 2 * (b.sigma * b.max_e_norm * np.sqrt(2 * log2N) / sqL + (b.sigma**2 + b.max_e_norm**2) * log2N / (3 * b.L))
    return float(source + cross + noise)


def delta_g_bound(delta_ry, g, f0, f1_abs):
    """Order estimate for the aligned sup-norm gain error given ``delta_ry``."""
    a = np.abs(np.asarray(g))
    amax, amin = a.max(), a.min()
    gn2 = float((a**2).sum())
    N = a.size
    coeff = 3 * (gn2 + N * amax**2) / (2 * amin * gn2 * f0) + 144 * N**2 * amax**5 / (amin**6 * f1_abs)
    return float(coeff * delta_ry)


def delta_f_bound(delta_ry, g, f0, f1_abs, gamma_max, sigma_max_A):
    """Order estimate for the deviation of the calibrated matrix."""
    a = np.abs(np.asarray(g))
    amax, amin = a.max(), a.min()
    gn2 = float((a**2).sum())
    N = a.size
    inner = 3 * (gn2 + N * amax**2) / (2 * amin * gn2 * f0) + 144 * N**2 * amax**5 / (amin**6 * f1_abs)
    coeff = 9 / amin**2 + 12 * amax**2 * gamma_max**2 * sigma_max_A**2 / amin**3 * inner
    return float(coeff * delta_ry)


def music_perturbation_bound(E_norm, lambda_s):
    """``2 |E| / lambda_s`` when ``2 |E| < lambda_s``, else ``None`` (not applicable)."""
    if lambda_s <= 0:
        raise ValueError("lambda_s must be positive")
    if 2 * E_norm >= lambda_s:
        return None
    return 2 * E_norm / lambda_s


def build_phi_k(k, N):
    """Rows ``b[l+k+1] - b[l+k] - b[l+1] + b[l]`` for ``l = 0..N-k-2``."""
    if not 1 <= k <= N - 2:
        raise BadK(f"k={k} outside 1..{N - 2}")
    rows = N - k - 1
    phi = np.zeros((rows, N))
    l = np.arange(rows)
    np.add.at(phi, (l, l + k + 1), 1.0)
    np.add.at(phi, (l, l + k), -1.0)
    np.add.at(phi, (l, l + 1), -1.0)
    np.add.at(phi, (l, l), 1.0)
    return phi


@dataclass(frozen=True)
class RankCondition:
    Lambda: tuple
    rank: int
    satisfied: bool


def rank_condition(f, zero_tol=1e-10):
    """Whether the phase differences available from the nonzero lags of ``f`` pin
    down the phases up to an affine ramp (stacked system of rank ``N - 2``)."""
    f = np.asarray(f, dtype=complex)
    N = f.size
    ref = abs(f[0])
    Lambda = tuple(k for k in range(1, N - 1) if abs(f[k]) > zero_tol * ref)
    if not Lambda:
        return RankCondition(Lambda=(), rank=0, satisfied=False)
    stacked = np.vstack([build_phi_k(k, N) for k in Lambda])
    sv = np.linalg.svd(stacked, compute_uv=False)
    rank = int((sv > 1e-10 * sv[0]).sum())
    return RankCondition(Lambda=Lambda, rank=rank, satisfied=rank == N - 2)
