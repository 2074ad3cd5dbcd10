"""Problem instances and synthetic snapshot generation.

The measurement model is ``y(t) = diag(g) A x(t) + e(t)`` for a uniform array
of ``N`` sensors, where ``A`` samples ``s`` complex exponentials on the torus
``[0, 1)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import sandwich, toeplitz


def wrap_distance(a, b):
    """Distance on the unit torus, elementwise and broadcastable."""
    d = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0))
    return np.minimum(d, 1.0 - d)


def min_separation(omegas):
    """Smallest pairwise wrap-around distance (``inf`` for a single point)."""
    w = np.sort(np.mod(np.asarray(omegas, dtype=float), 1.0))
    if w.size < 2:
        return np.inf
    gaps = np.diff(np.append(w, w[0] + 1.0))
    return float(gaps.min())


@dataclass(frozen=True)
class FrequencySet:
    omegas: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        gammas = np.asarray(self.gammas, dtype=float)
        if omegas.ndim != 1 or omegas.shape != gammas.shape:
            raise ValueError("omegas and gammas must be 1-D of equal length")
        if np.any(omegas < 0) or np.any(omegas >= 1):
            raise ValueError("frequencies must lie in [0, 1)")
        if np.any(gammas <= 0):
            raise ValueError("source powers must be positive")
        if omegas.size > 1 and min_separation(omegas) <= 0:
            raise ValueError("frequencies must be distinct on the torus")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "gammas", gammas)

    @property
    def s(self):
        return self.omegas.size


@dataclass(frozen=True)
class CalibrationVector:
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex)
        if g.ndim != 1:
            raise ValueError("gains must be a 1-D vector")
        if np.any(np.abs(g) == 0):
            raise ValueError("calibration gains must not vanish")
        object.__setattr__(self, "g", g)

    @property
    def alpha(self):
        return np.abs(self.g)

    @property
    def beta(self):
        return np.angle(self.g)


@dataclass(frozen=True)
class ProblemInstance:
    freq: FrequencySet
    cal: CalibrationVector
    sigma: float = 0.0
    seed: int = 0
    N: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "N", self.cal.g.size)
        if self.N < self.freq.s + 1:
            raise ValueError(f"need N >= s + 1, got N={self.N}, s={self.freq.s}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def steering_matrix(omegas, N):
    """``A[n, j] = exp(2 pi i n omega_j) / sqrt(N)``; columns have unit norm."""
    if isinstance(omegas, FrequencySet):
        omegas = omegas.omegas
    n = np.arange(N)[:, None]
    return np.exp(2j * np.pi * n * np.asarray(omegas, dtype=float)[None, :]) / np.sqrt(N)


def ground_truth_f(freq, N):
    """First column of the Toeplitz core: ``f_n = sum_j gamma_j^2 e^{2 pi i n w_j} / N``."""
    n = np.arange(N)[:, None]
    f = (freq.gammas**2 * np.exp(2j * np.pi * n * freq.omegas[None, :])).sum(axis=1) / N
    f[0] = f[0].real
    return f


def exact_covariance(inst):
    """Noiseless covariance ``diag(g) T(f) diag(conj g)``."""
    f = ground_truth_f(inst.freq, inst.N)
    return sandwich(inst.cal.g, toeplitz(f), inst.cal.g)


def sample_snapshots(inst, L, rng=None, return_parts=False):
    """Draw ``L`` noisy snapshots as an ``N x L`` matrix.

    Sources have constant modulus ``gamma_j`` and independent uniform phases.
    Noise is circular complex Gaussian with ``E e e^* = sigma^2 I``.
    With ``return_parts`` the source matrix ``X`` (s x L) and noise ``E``
    (N x L) are returned too.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if rng is None:
        rng = np.random.default_rng(inst.seed)
    s, N = inst.freq.s, inst.N
    theta = rng.uniform(0.0, 2 * np.pi, size=(s, L))
    X = inst.freq.gammas[:, None] * np.exp(1j * theta)
    E = (inst.sigma / np.sqrt(2.0)) * (rng.standard_normal((N, L)) + 1j * rng.standard_normal((N, L)))
    A = steering_matrix(inst.freq.omegas, N)
    Y = inst.cal.g[:, None] * (A @ X) + E
    if return_parts:
        return Y, X, E
    return Y


def random_gains(N, dr_g, rng):
    """Amplitudes uniform on ``[1, dr_g]``, phases uniform on ``[0, 2 pi)``."""
    amp = rng.uniform(1.0, dr_g, size=N)
    return amp * np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=N))


def make_instance(N, s, separation=2.0, dr_gamma=2.0, dr_g=2.0, sigma=0.0, seed=0):
    """Instance family used by the experiments.

    ``s`` frequencies exactly ``separation / N`` apart starting at a random
    offset, ``gamma_j ~ U[1, dr_gamma]``, ``|g_n| ~ U[1, dr_g]`` with uniform
    phases. Deterministic in ``seed``.
    """
    if separation * s > N:
        raise ValueError("frequencies do not fit on the torus: separation * s > N")
    rng = np.random.default_rng(seed)
    start = rng.uniform(0.0, 1.0)
    omegas = np.mod(start + separation * np.arange(s) / N, 1.0)
    gammas = rng.uniform(1.0, dr_gamma, size=s)
    g = random_gains(N, dr_g, rng)
    return ProblemInstance(FrequencySet(omegas, gammas), CalibrationVector(g), sigma=sigma, seed=seed)


def random_instance(N, s, rng, min_sep=1.5, dr_gamma=2.0, dr_g=2.0, sigma=0.0, f1_floor=0.0, seed=0):
    """Instance with ``s`` random frequencies at least ``min_sep / N`` apart.

    Rejection-samples until the separation holds and ``|f_1| > f1_floor * f_0``.
    """
    while True:
        omegas = np.sort(rng.uniform(0.0, 1.0, size=s))
        if s > 1 and min_separation(omegas) < min_sep / N:
            continue
        gammas = rng.uniform(1.0, dr_gamma, size=s)
        freq = FrequencySet(omegas, gammas)
        f = ground_truth_f(freq, N)
        if abs(f[1]) <= f1_floor * f[0].real:
            continue
        g = random_gains(N, dr_g, rng)
        return ProblemInstance(freq, CalibrationVector(g), sigma=sigma, seed=seed)
