"""Error metrics that are blind to the trivial ambiguity.

Recovered frequencies are compared after the best torus translation; the
recovered gains are first demodulated by the matching linear phase ramp and
then fitted to the truth with one complex scale.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ZeroTrueGain
from .model import FrequencySet, wrap_distance

SUCCESS_THRESHOLD = 0.2


@dataclass(frozen=True)
class AlignmentResult:
    c2_star: float
    c_star: complex
    supp_error: float
    cal_error_per_sensor: np.ndarray
    cal_error_mean: float


def _omegas(S):
    if isinstance(S, FrequencySet):
        return S.omegas
    return np.mod(np.atleast_1d(np.asarray(S, dtype=float)), 1.0)


def hausdorff_shifted(S_true, S_hat, shifts):
    """Hausdorff distance between ``S_true`` and ``S_hat + t`` for each shift ``t``."""
    w = _omegas(S_true)
    wh = _omegas(S_hat)
    t = np.atleast_1d(np.asarray(shifts, dtype=float))
    D = wrap_distance(wh[None, :, None] + t[:, None, None], w[None, None, :])
    return np.maximum(D.min(axis=2).max(axis=1), D.min(axis=1).max(axis=1))


def supp_error(S_true, S_hat, tol=1e-13):
    """Translation-minimised Hausdorff distance on the torus.

    Returns ``(error, c2)`` where ``c2`` (radians, in ``[0, 2 pi)``) is the
    minimising translation: ``S_hat`` is shifted by ``c2 / (2 pi)``.

    The objective is 1-Lipschitz in the shift, so after seeding with every
    pairwise alignment the global minimum is located by interval bisection
    with Lipschitz pruning, to within ``tol`` in both shift and value.
    """
    w = _omegas(S_true)
    wh = _omegas(S_hat)
    if w.size == 0 or wh.size == 0:
        raise ValueError("both frequency sets must be nonempty")
    seeds = np.mod(w[None, :] - wh[:, None], 1.0).ravel()
    vals = hausdorff_shifted(w, wh, seeds)
    k = int(np.argmin(vals))
    best_t, best = float(seeds[k]), float(vals[k])

    width = 1.0
    lo = np.array([0.0])
    while width > tol and best > 0.0:
        mid = lo + width / 2
        h = hausdorff_shifted(w, wh, mid)
        k = int(np.argmin(h))
        if h[k] < best:
            best, best_t = float(h[k]), float(mid[k])
        keep = h - width / 2 <= best
        lo = lo[keep]
        width /= 2
        lo = np.concatenate([lo, lo + width])
    return best, float(np.mod(2 * np.pi * best_t, 2 * np.pi))


def cal_error(g_true, g_hat, c2_star):
    """Relative per-sensor gain error after ramp removal and complex scale fit.

    Returns ``(per_sensor, mean, c_star)``.
    """
    g = np.asarray(getattr(g_true, "g", g_true), dtype=complex)
    gh = np.asarray(g_hat, dtype=complex)
    if g.shape != gh.shape:
        raise ValueError("gain vectors differ in length")
    if np.any(np.abs(g) == 0):
        raise ZeroTrueGain("true gains must be nonzero")
    n = np.arange(g.size)
    g_tilde = gh * np.exp(-1j * n * c2_star)
    c_star = np.vdot(g, g_tilde) / np.vdot(g, g).real
    per = np.abs(g_tilde - c_star * g) / np.abs(g)
    return per, float(per.mean()), complex(c_star)


def success_indicator(supp_err, N):
    return bool(supp_err <= SUCCESS_THRESHOLD / N)


def align(S_true, S_hat, g_true, g_hat):
    err, c2 = supp_error(S_true, S_hat)
    per, mean, c_star = cal_error(g_true, g_hat, c2)
    return AlignmentResult(c2_star=c2, c_star=c_star, supp_error=err, cal_error_per_sensor=per, cal_error_mean=mean)
