"""Regularised least-squares calibration by Wirtinger gradient descent.

The unknowns are the gains ``g`` and the Toeplitz sequence ``f``; the loss is
``|diag(g) T(f) diag(conj g) - r_hat|_F^2`` plus a penalty that keeps the
iterates in a bounded set whose size is set by ``n0 = |g|^2 |f|``, which is
itself estimated from ``r_hat``. Descent starts from the partial algebraic
solution and frequencies are read off ``T(f)`` by MUSIC at the end.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import algebraic, music
from .core import diagonal_means, toeplitz, toeplitz_adjoint
from .errors import NonPositiveDiagonal, StepUnderflow, ZeroInitialVector

log = logging.getLogger(__name__)

RHO_FACTOR = 3.0 / (np.sqrt(2.0) - 1.0) ** 2


def estimate_n0(r_hat):
    """Estimate ``|g|^2 |f|`` from a (denoised) covariance.

    Each lag-``k`` diagonal contributes the average of its normalised squared
    magnitudes ``|r[n+k, n]|^2 / (r[n+k, n+k] r[n, n])``.
    """
    R = np.asarray(getattr(r_hat, "r_hat", r_hat), dtype=complex)
    d = R.diagonal().real
    if np.any(d <= 0):
        raise NonPositiveDiagonal("n0 estimate needs a positive diagonal")
    N = d.size
    total = 1.0
    for k in range(1, N):
        sub = np.abs(np.diagonal(R, -k)) ** 2
        total += (sub / (d[k:] * d[: N - k])).sum() / (N - k)
    return float(d.sum() * np.sqrt(total))


def default_rho(n0):
    return RHO_FACTOR * n0


def full_rho(n0, residual_frobenius):
    """Penalty weight rule when the covariance error ``|R - R_hat|_F`` is known."""
    return (3 * n0 + residual_frobenius) / (np.sqrt(2.0) - 1.0) ** 2


def _residual(g, f, R):
    T = toeplitz(f)
    return g[:, None] * T * np.conj(g)[None, :] - R, T


def objective(g, f, r_hat):
    D, _ = _residual(np.asarray(g, dtype=complex), np.asarray(f, dtype=complex), r_hat)
    return float(np.vdot(D, D).real)


def _g0(z):
    return max(z - 1.0, 0.0) ** 2


def _g0_prime(z):
    return 2.0 * max(z - 1.0, 0.0)


def penalty(g, f, n0, rho):
    gn2 = float(np.vdot(g, g).real)
    fn2 = float(np.vdot(f, f).real)
    return rho * (_g0(fn2 / (2 * n0)) + _g0(gn2 / np.sqrt(2 * n0)))


def regularized_objective(g, f, r_hat, n0, rho):
    return objective(g, f, r_hat) + penalty(g, f, n0, rho)


def gradient(g, f, r_hat, n0, rho):
    """Wirtinger gradient ``dL~/d conj(z)`` of the regularised objective.

    ``f[0]`` is a real coordinate, so its entry is half the ordinary
    derivative, matching the convention of every complex coordinate. For a
    real direction ``dz`` the directional derivative is
    ``2 Re sum(conj(grad) * dz)``.
    """
    g = np.asarray(g, dtype=complex)
    f = np.asarray(f, dtype=complex)
    R = np.asarray(r_hat, dtype=complex)
    D, T = _residual(g, f, R)
    grad_g = 2.0 * (T * g[:, None] * np.conj(D)).sum(axis=0)
    grad_f = toeplitz_adjoint(np.conj(np.conj(g)[:, None] * D * g[None, :]))
    grad_f[0] *= 0.5

    gn2 = float(np.vdot(g, g).real)
    fn2 = float(np.vdot(f, f).real)
    grad_g = grad_g + rho / np.sqrt(2 * n0) * _g0_prime(gn2 / np.sqrt(2 * n0)) * g
    grad_f = grad_f + rho / (2 * n0) * _g0_prime(fn2 / (2 * n0)) * f
    return grad_g, grad_f


def lipschitz_bound(n0, residual_frobenius, rho):
    """Gradient Lipschitz constant on the bounded set; steps up to ``2 / C`` are safe."""
    m = max(np.sqrt(n0), n0**0.25)
    return float(166 * n0 * m + 8 * n0 + 16 * m * residual_frobenius + 12 * rho / min(n0, np.sqrt(n0)))


def fixed_step(n0, residual_frobenius, rho):
    """Largest admissible constant step ``2 / C_Lip``."""
    return 2.0 / lipschitz_bound(n0, residual_frobenius, rho)


@dataclass
class OptimConfig:
    rho: float | None = None
    theta: float = 0.5
    c: float = 0.5
    eta_min: float = 1e-4
    max_iters: int = 5000
    grad_tol: float | None = None
    step: str = "backtracking"
    eta: float | None = None
    grid_size: int | None = None
    refine_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 < self.c < 1:
            raise ValueError("c must lie in (0, 1)")
        if self.step not in ("backtracking", "fixed"):
            raise ValueError("step must be 'backtracking' or 'fixed'")


@dataclass
class OptimState:
    g: np.ndarray
    f: np.ndarray
    iterate_index: int = 0
    objective_value: float = np.nan
    gradient_norm: float = np.nan


@dataclass
class TraceRow:
    iteration: int
    objective: float
    grad_norm: float
    eta: float
    g_norm2: float
    f_norm: float
    f0_imag: float


@dataclass
class CalibrationResult:
    g_hat: np.ndarray
    f_hat: np.ndarray
    omegas: np.ndarray
    peaks: music.PeakSet
    n0: float
    rho: float
    trace: list = field(default_factory=list)
    stop_reason: str = ""
    algebraic_output: algebraic.AlgebraicOutput | None = None

    @property
    def iterations(self):
        return self.trace[-1].iteration if self.trace else 0

    @property
    def final_objective(self):
        return self.trace[-1].objective if self.trace else np.nan


def initialize(alg_out, n0):
    """Starting point from the algebraic solution, rescaled so that
    ``|g|^2 = sqrt(n0)`` and ``|f| = sqrt(n0)``."""
    g = np.asarray(alg_out.g_hat, dtype=complex)
    f = diagonal_means(alg_out.f_matrix)
    f[0] = f[0].real
    gn, fn = np.linalg.norm(g), np.linalg.norm(f)
    if gn == 0 or fn == 0:
        raise ZeroInitialVector("algebraic initialisation has a zero vector")
    return OptimState(g=n0**0.25 * g / gn, f=np.sqrt(n0) * f / fn)


def _line_model(g, f, a, b, R, n0, rho):
    """Loss along ``(g + t a, f + t b)`` as polynomial coefficients in ``t``.

    The model is exact up to rounding; it also returns a bound used to
    decide when rounding could flip an acceptance test.
    """
    T0, T1 = toeplitz(f), toeplitz(b)
    gc, ac = np.conj(g), np.conj(a)
    P0 = g[:, None] * gc[None, :]
    P1 = a[:, None] * gc[None, :] + g[:, None] * ac[None, :]
    P2 = a[:, None] * ac[None, :]
    C = [P0 * T0 - R, P1 * T0 + P0 * T1, P2 * T0 + P1 * T1, P2 * T1]
    coef = np.zeros(7)
    for j in range(4):
        for k in range(j, 4):
            v = np.vdot(C[j], C[k]).real
            coef[j + k] += v if j == k else 2 * v
    norms = np.array([np.linalg.norm(c) for c in C])
    quad_g = (np.vdot(g, g).real, 2 * np.vdot(g, a).real, np.vdot(a, a).real)
    quad_f = (np.vdot(f, f).real, 2 * np.vdot(f, b).real, np.vdot(b, b).real)

    def value(t):
        t = np.asarray(t, dtype=float)
        loss = np.zeros_like(t)
        for c in coef[::-1]:
            loss = loss * t + c
        gn2 = quad_g[0] + t * quad_g[1] + t * t * quad_g[2]
        fn2 = quad_f[0] + t * quad_f[1] + t * t * quad_f[2]
        pen = rho * (
            np.maximum(fn2 / (2 * n0) - 1.0, 0.0) ** 2 + np.maximum(gn2 / np.sqrt(2 * n0) - 1.0, 0.0) ** 2
        )
        scale = norms[0] + t * (norms[1] + t * (norms[2] + t * norms[3]))
        return loss + pen, 1e-10 * (scale**2 + np.abs(pen) + 1.0)

    return value


def backtracking_step(state, grad, R, n0, rho, config, value=None):
    """One Armijo backtracking step along ``-grad``.

    The trial step starts at ``L~(z) / |grad|`` and is multiplied by ``theta``
    until ``L~(z + eta p) <= L~(z) - c eta |p|^2``. Raises
    :class:`StepUnderflow` once ``eta < eta_min`` without acceptance.
    Returns ``(eta, new_state)``.

    Trial steps that a polynomial model of the loss along the line rejects
    with a clear margin are skipped; every acceptance is decided on the
    directly evaluated objective.
    """
    grad_g, grad_f = grad
    pn2 = float(np.vdot(grad_g, grad_g).real + np.vdot(grad_f, grad_f).real)
    if pn2 == 0:
        raise ValueError("zero gradient: the descent loop should have stopped")
    if value is None:
        value = regularized_objective(state.g, state.f, R, n0, rho)
    line = _line_model(state.g, state.f, -grad_g, -grad_f, R, n0, rho)
    eta_bar = value / np.sqrt(pn2)
    # trial steps eta_bar * theta^k, k = 1, 2, ..., while they stay >= eta_min
    n_trials = 0
    if eta_bar * config.theta >= config.eta_min:
        n_trials = int(np.floor(np.log(eta_bar * config.theta / config.eta_min) / -np.log(config.theta))) + 1
    etas = eta_bar * config.theta ** np.arange(1, n_trials + 1)
    etas = etas[etas >= config.eta_min]
    predicted, slack = line(etas)
    targets = value - config.c * etas * pn2
    for k in np.flatnonzero(predicted <= targets + slack):
        eta = float(etas[k])
        g_new = state.g - eta * grad_g
        f_new = state.f - eta * grad_f
        new_value = regularized_objective(g_new, f_new, R, n0, rho)
        if new_value <= targets[k]:
            return eta, OptimState(g=g_new, f=f_new, iterate_index=state.iterate_index + 1, objective_value=new_value)
    raise StepUnderflow(f"no step above {config.eta_min:.1e} gives sufficient decrease")


def _row(state, value, gnorm, eta):
    return TraceRow(
        iteration=state.iterate_index,
        objective=value,
        grad_norm=gnorm,
        eta=eta,
        g_norm2=float(np.vdot(state.g, state.g).real),
        f_norm=float(np.linalg.norm(state.f)),
        f0_imag=float(state.f[0].imag),
    )


def descend(state, R, n0, rho, config):
    """Gradient descent from ``state``; returns ``(state, trace, stop_reason)``."""
    value = regularized_objective(state.g, state.f, R, n0, rho)
    grad = gradient(state.g, state.f, R, n0, rho)
    gnorm = float(np.sqrt(np.vdot(grad[0], grad[0]).real + np.vdot(grad[1], grad[1]).real))
    grad_tol = config.grad_tol if config.grad_tol is not None else 1e-9 * max(1.0, value)
    trace = [_row(state, value, gnorm, np.nan)]
    reason = "max_iters"
    for _ in range(config.max_iters):
        if gnorm <= grad_tol:
            reason = "grad_tol"
            break
        if config.step == "fixed":
            eta = config.eta if config.eta is not None else fixed_step(n0, 0.0, rho)
            state = OptimState(
                g=state.g - eta * grad[0], f=state.f - eta * grad[1], iterate_index=state.iterate_index + 1
            )
            value = regularized_objective(state.g, state.f, R, n0, rho)
        else:
            try:
                eta, state = backtracking_step(state, grad, R, n0, rho, config, value=value)
            except StepUnderflow:
                reason = "step_underflow"
                break
            value = state.objective_value
        grad = gradient(state.g, state.f, R, n0, rho)
        gnorm = float(np.sqrt(np.vdot(grad[0], grad[0]).real + np.vdot(grad[1], grad[1]).real))
        state.objective_value, state.gradient_norm = value, gnorm
        trace.append(_row(state, value, gnorm, eta))
    state.objective_value, state.gradient_norm = value, gnorm
    return state, trace, reason


def run_optimizer(data, s, config=None, kind="auto"):
    """Full optimisation pipeline.

    ``data`` is read as in :func:`blindcal.algebraic.prepare_r_hat`.
    """
    config = config or OptimConfig()
    den = algebraic.prepare_r_hat(data, s, kind)
    alg = algebraic.run_partial_algebraic(den, s)
    R = alg.r_hat
    n0 = estimate_n0(R)
    rho = config.rho if config.rho is not None else default_rho(n0)
    state = initialize(alg, n0)
    state, trace, reason = descend(state, R, n0, rho, config)
    log.debug("descent stopped after %d iterations (%s)", state.iterate_index, reason)
    f_hat = state.f.copy()
    peaks, _ = music.music(toeplitz(f_hat), s, grid_size=config.grid_size, refine_tol=config.refine_tol)
    return CalibrationResult(
        g_hat=state.g,
        f_hat=f_hat,
        omegas=peaks.omegas,
        peaks=peaks,
        n0=n0,
        rho=rho,
        trace=trace,
        stop_reason=reason,
        algebraic_output=alg,
    )


TRACE_COLUMNS = ("iter", "objective", "grad_norm", "eta")


def write_trace_csv(trace, fh):
    """Write ``iter, objective, grad_norm, eta`` rows to an open text file."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow([r.iteration, repr(float(r.objective)), repr(float(r.grad_norm)), "" if np.isnan(r.eta) else repr(float(r.eta))])
