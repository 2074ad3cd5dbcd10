import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blindcal.algebraic import run_partial_algebraic
from blindcal.core import diagonal_means, sandwich, toeplitz, toeplitz_adjoint
from blindcal.errors import StepUnderflow
from blindcal.metrics import align
from blindcal.model import exact_covariance, ground_truth_f, make_instance, random_instance, sample_snapshots
from blindcal.optim import (
    RHO_FACTOR,
    OptimConfig,
    OptimState,
    backtracking_step,
    default_rho,
    descend,
    estimate_n0,
    fixed_step,
    gradient,
    initialize,
    lipschitz_bound,
    objective,
    penalty,
    regularized_objective,
    run_optimizer,
    write_trace_csv,
)

from conftest import crandn


def random_point(rng, N):
    g = crandn(rng, N)
    f = crandn(rng, N)
    f[0] = abs(f[0]) + 1
    B = crandn(rng, N, N)
    return g, f, B + B.conj().T


def test_rho_factor():
    assert RHO_FACTOR == pytest.approx(3 / (np.sqrt(2) - 1) ** 2)
    assert default_rho(2.0) == pytest.approx(2 * RHO_FACTOR)


def test_n0_examples(rng):
    assert estimate_n0(np.eye(5)) == pytest.approx(5)
    inst = random_instance(12, 3, rng)
    R = exact_covariance(inst)
    want = np.vdot(inst.cal.g, inst.cal.g).real * np.linalg.norm(ground_truth_f(inst.freq, 12))
    assert estimate_n0(R) == pytest.approx(want, rel=1e-10)
    assert estimate_n0(4 * R) == pytest.approx(4 * estimate_n0(R), rel=1e-12)


def test_objective_examples(rng):
    inst = random_instance(10, 3, rng)
    g, f = inst.cal.g, ground_truth_f(inst.freq, 10)
    R = exact_covariance(inst)
    assert objective(g, f, R) <= 1e-18
    c0, c1, c2 = 1.7, 0.4, 0.9
    n = np.arange(10)
    gt = c0 * np.exp(1j * (c1 + n * c2)) * g
    ft = c0**-2 * np.exp(-1j * n * c2) * f
    assert objective(gt, ft, R) <= 1e-18
    assert objective(np.zeros(10), np.zeros(10), R) == pytest.approx(np.linalg.norm(R) ** 2)


@given(st.floats(0.2, 5), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi), st.integers(0, 2**32 - 1))
def test_ambiguity_flatness(c0, c1, c2, seed):
    """With r_hat generated by (g, f), moving any point (g2, f2) along the
    ambiguity family leaves the objective unchanged; the truth's orbit has zero loss."""
    rng = np.random.default_rng(seed)
    N = 7
    g, f, _ = random_point(rng, N)
    R = sandwich(g, toeplitz(f), g)
    g2, f2, _ = random_point(rng, N)
    n = np.arange(N)
    phase = np.exp(1j * (c1 + n * c2))
    ramp = c0 * phase
    # diag(g) T(f) diag(conj g) itself is invariant along the family
    base = objective(g2, f2, R)
    moved = objective(ramp * g2, c0**-2 * np.exp(-1j * n * c2) * f2, R)
    assert moved == pytest.approx(base, rel=1e-10)
    # against the original data, the truth's whole orbit has zero loss
    assert objective(ramp * g, c0**-2 * np.exp(-1j * n * c2) * f, R) <= 1e-20 * max(1.0, np.linalg.norm(R) ** 2)


def test_penalty_examples():
    n0, rho = 2.0, 7.0
    f = np.zeros(4, dtype=complex)
    f[0] = 0.99 * np.sqrt(2 * n0)
    g = np.full(4, 0.99 * (np.sqrt(2 * n0) / 4) ** 0.5)
    assert penalty(g, f, n0, rho) == 0
    f[0] = np.sqrt(4 * n0)
    assert penalty(np.full(4, 1e-3), f, n0, rho) == pytest.approx(rho)
    g = np.array([2.0, 1j, 1.0, 0.5])
    f = np.array([3.0, 1 + 1j, 0, 0.2j])
    zf = (9 + 2 + 0.04) / (2 * n0)
    zg = (4 + 1 + 1 + 0.25) / np.sqrt(2 * n0)
    assert penalty(g, f, n0, rho) == pytest.approx(rho * ((zf - 1) ** 2 + (zg - 1) ** 2))


def test_gradient_zero_at_truth(rng):
    inst = random_instance(10, 3, rng)
    g, f = inst.cal.g, ground_truth_f(inst.freq, 10)
    R = exact_covariance(inst)
    n0 = estimate_n0(R)
    # balanced representative of the ambiguity class: |g|^2 = |f| = sqrt(n0), inside the dead zone
    c0 = (np.sqrt(n0) / np.vdot(g, g).real) ** 0.5
    g, f = c0 * g, f / c0**2
    assert penalty(g, f, n0, default_rho(n0)) == 0
    gg, gf = gradient(g, f, R, n0, default_rho(n0))
    assert np.abs(gg).max() <= 1e-10 and np.abs(gf).max() <= 1e-10


def test_gradient_at_zero_f(rng):
    g, _, R = random_point(rng, 5)
    gg, gf = gradient(g, np.zeros(5), R, 1e6, 0.0)
    np.testing.assert_allclose(gg, 0, atol=1e-12)
    want = toeplitz_adjoint(np.conj(np.conj(g)[:, None] * -R * g[None, :]))
    want[0] *= 0.5
    np.testing.assert_allclose(gf, want, atol=1e-12)


def directional_check(rng, N, n_dirs=20, scale=1.0):
    g, f, R = random_point(rng, N)
    g, f = scale * g, scale * f
    n0 = rng.uniform(0.5, 3.0)
    rho = default_rho(n0)
    gg, gf = gradient(g, f, R, n0, rho)
    worst = 0.0
    for _ in range(n_dirs):
        dg, df = crandn(rng, N), crandn(rng, N)
        df[0] = df[0].real
        h = 1e-5
        up = regularized_objective(g + h * dg, f + h * df, R, n0, rho)
        dn = regularized_objective(g - h * dg, f - h * df, R, n0, rho)
        fd = (up - dn) / (2 * h)
        an = 2 * (np.vdot(gg, dg) + np.vdot(gf, df)).real
        worst = max(worst, abs(fd - an) / abs(an))
    return worst


@pytest.mark.parametrize("N", [4, 8])
def test_gradient_finite_differences(rng, N):
    for _ in range(5):
        assert directional_check(rng, N, scale=0.5) <= 1e-5
        assert directional_check(rng, N, scale=2.0) <= 1e-5  # penalty active


def test_initialize(rng):
    inst = random_instance(12, 3, rng, f1_floor=0.01)
    R = exact_covariance(inst)
    alg = run_partial_algebraic(R, 3)
    n0 = estimate_n0(R)
    st0 = initialize(alg, n0)
    assert objective(st0.g, st0.f, R) <= 1e-16
    assert st0.f[0].imag == 0
    assert np.vdot(st0.g, st0.g).real == pytest.approx(np.sqrt(n0))
    assert np.linalg.norm(st0.f) == pytest.approx(np.sqrt(n0))
    # per-diagonal averaging oracle on a non-Toeplitz Hermitian input
    B = crandn(rng, 6, 6)
    F = B + B.conj().T
    loop = np.array([np.mean([F[n + k, n] for n in range(6 - k)]) for k in range(6)])
    np.testing.assert_allclose(diagonal_means(F), loop, atol=1e-14)


@pytest.mark.parametrize("z, want", [(1.0, 0.5), (5.0, 1.25)])
def test_line_search_scalar_oracle(monkeypatch, z, want):
    """With the objective replaced by |f0|^2 the accepted step follows the hand
    computation: steps eta = theta^k |z| are tried and the first with
    (1 - eta)^2 <= 1 - c eta, i.e. eta <= 2 - c, wins."""
    from blindcal import optim

    def scalar(g, f, R, n0, rho):
        return float(abs(f[0]) ** 2)

    def line(g, f, a, b, R, n0, rho):
        def value(t):
            t = np.asarray(t, dtype=float)
            return np.abs(f[0] + t * b[0]) ** 2, np.zeros_like(t)

        return value

    monkeypatch.setattr(optim, "regularized_objective", scalar)
    monkeypatch.setattr(optim, "_line_model", line)
    state = OptimState(g=np.zeros(2, dtype=complex), f=np.array([z, 0], dtype=complex))
    grad = (np.zeros(2, dtype=complex), np.array([z, 0], dtype=complex))  # Wirtinger gradient of |z|^2
    eta, new = backtracking_step(state, grad, None, 1.0, 0.0, OptimConfig(theta=0.5, c=0.5))
    assert eta == want
    assert new.f[0] == pytest.approx((1 - want) * z)


def test_backtracking_accepts_with_decrease(rng):
    inst = make_instance(16, 3, separation=2, sigma=0.5, seed=2)
    Y = sample_snapshots(inst, 100, np.random.default_rng(0))
    alg = run_partial_algebraic(Y, 3, kind="snapshots")
    R = alg.r_hat
    n0 = estimate_n0(R)
    rho = default_rho(n0)
    state = initialize(alg, n0)
    config = OptimConfig()
    for _ in range(10):
        old = regularized_objective(state.g, state.f, R, n0, rho)
        grad = gradient(state.g, state.f, R, n0, rho)
        eta, new = backtracking_step(state, grad, R, n0, rho, config)
        pn2 = sum(np.vdot(x, x).real for x in grad)
        assert new.objective_value < old
        assert new.objective_value <= old - config.c * eta * pn2
        # the model screening never changes the outcome of a plain scan
        eta_bar = old / np.sqrt(pn2)
        k = 1
        while True:
            t = eta_bar * config.theta**k
            val = regularized_objective(state.g - t * grad[0], state.f - t * grad[1], R, n0, rho)
            if val <= old - config.c * t * pn2:
                break
            k += 1
        assert eta == pytest.approx(t, rel=1e-14)
        state = new


def test_backtracking_zero_gradient_and_underflow(rng):
    state = OptimState(g=np.ones(3, dtype=complex), f=np.array([1.0, 0, 0], dtype=complex))
    zero = (np.zeros(3, dtype=complex), np.zeros(3, dtype=complex))
    with pytest.raises(ValueError):
        backtracking_step(state, zero, np.eye(3), 3.0, 1.0, OptimConfig())
    # an ascent direction can never satisfy sufficient decrease
    R = np.eye(3) * 2.0
    g_up = gradient(state.g, state.f, R, 3.0, 1.0)
    flipped = (-g_up[0], -g_up[1])
    with pytest.raises(StepUnderflow):
        backtracking_step(state, flipped, R, 3.0, 1.0, OptimConfig())


def test_optimizer_exact(rng):
    for _ in range(3):
        inst = random_instance(16, 4, rng, f1_floor=0.01)
        res = run_optimizer(exact_covariance(inst), 4)
        assert res.final_objective <= 1e-14
        al = align(inst.freq, res.omegas, inst.cal.g, res.g_hat)
        assert al.cal_error_mean <= 1e-7
        assert al.supp_error <= 1e-6


def test_optimizer_trace_monotone_and_bounded():
    inst = make_instance(32, 8, separation=2, sigma=0.5, seed=4)
    Y = sample_snapshots(inst, 200, np.random.default_rng(1))
    res = run_optimizer(Y, 8, kind="snapshots")
    obj = np.array([r.objective for r in res.trace])
    assert np.all(np.diff(obj) <= 0)
    bound = 2 * np.sqrt(res.n0) + 1e-9
    assert all(r.g_norm2 <= bound and r.f_norm <= bound for r in res.trace)
    assert all(abs(r.f0_imag) <= 1e-10 for r in res.trace)
    gnorms = np.array([r.grad_norm for r in res.trace])
    assert np.all(np.diff(np.minimum.accumulate(gnorms)) <= 0)
    assert res.stop_reason in ("grad_tol", "step_underflow", "max_iters")
    # the regression baseline: descent improves on its algebraic start
    alg = align(inst.freq, res.omegas, inst.cal.g, res.algebraic_output.g_hat).cal_error_mean
    assert align(inst.freq, res.omegas, inst.cal.g, res.g_hat).cal_error_mean < alg


def test_trace_csv(tmp_path):
    inst = make_instance(16, 3, sigma=0.3, seed=1)
    res = run_optimizer(sample_snapshots(inst, 100, np.random.default_rng(2)), 3, kind="snapshots")
    p = tmp_path / "trace.csv"
    with open(p, "w", newline="") as fh:
        write_trace_csv(res.trace, fh)
    lines = p.read_text().splitlines()
    assert lines[0] == "iter,objective,grad_norm,eta"
    assert len(lines) == len(res.trace) + 1
    assert "np." not in p.read_text()


def test_lipschitz_bound():
    n0 = 1.0
    rho = 3 / (np.sqrt(2) - 1) ** 2
    assert lipschitz_bound(n0, 0.0, rho) == pytest.approx(166 + 8 + 12 * rho)
    assert fixed_step(n0, 0.0, rho) == pytest.approx(2 / (174 + 12 * rho))
    vals = [0.5, 1.0, 4.0]
    for a, b, c in itertools.product(vals, vals, vals):
        base = lipschitz_bound(a, b, c)
        assert lipschitz_bound(a, b * 2, c) >= base
        assert lipschitz_bound(a, b, c * 2) >= base
        assert lipschitz_bound(a * 2, b, c) >= base


def test_fixed_step_descent():
    inst = make_instance(16, 3, separation=2, sigma=0.5, seed=6)
    Y = sample_snapshots(inst, 300, np.random.default_rng(3))
    alg = run_partial_algebraic(Y, 3, kind="snapshots")
    R = alg.r_hat
    n0 = estimate_n0(R)
    rho = default_rho(n0)
    eta = 1.0 / lipschitz_bound(n0, 0.0, rho)
    _, trace, _ = descend(initialize(alg, n0), R, n0, rho, OptimConfig(step="fixed", eta=eta, max_iters=200, grad_tol=0.0))
    obj = np.array([r.objective for r in trace])
    assert len(obj) == 201
    assert np.all(np.diff(obj) <= 1e-12 * obj[0])


def test_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(theta=1.0)
    with pytest.raises(ValueError):
        OptimConfig(step="newton")
