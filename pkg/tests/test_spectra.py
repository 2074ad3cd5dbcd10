import numpy as np
import pytest

from blindcal.core import hermitian_eig
from blindcal.errors import SparsityTooLarge
from blindcal.model import exact_covariance, make_instance, random_instance, sample_snapshots
from blindcal.spectra import denoise, empirical_covariance, estimate_noise_level

from conftest import crandn


def test_single_snapshot():
    y = np.zeros((4, 1), dtype=complex)
    y[0, 0] = 1
    want = np.zeros((4, 4))
    want[0, 0] = 1
    np.testing.assert_array_equal(empirical_covariance(y), want)


def test_orthogonal_columns_give_projector():
    Y = np.sqrt(3) * np.eye(5, 3, dtype=complex)
    np.testing.assert_allclose(empirical_covariance(Y), np.diag([1, 1, 1, 0, 0]), atol=1e-15)


def test_empirical_matches_loop(rng):
    Y = crandn(rng, 4, 7)
    R = np.zeros((4, 4), dtype=complex)
    for m in range(4):
        for n in range(4):
            for t in range(7):
                R[m, n] += Y[m, t] * np.conj(Y[n, t])
    np.testing.assert_allclose(empirical_covariance(Y), R / 7, atol=1e-12)


def test_empirical_psd(rng):
    R = empirical_covariance(crandn(rng, 8, 3))
    lam, _ = hermitian_eig(R)
    assert lam.min() >= -1e-10 * np.linalg.norm(R, 2)


def test_noise_level_examples(rng):
    assert estimate_noise_level(0.49 * np.eye(6), 2) == pytest.approx(0.7, rel=1e-12)
    assert estimate_noise_level(np.diag([5.0, 3.0, 1.0, 1.0]), 2) == pytest.approx(1.0, rel=1e-12)
    inst = random_instance(12, 4, rng)
    R = exact_covariance(inst)
    assert estimate_noise_level(R + 0.09 * np.eye(12), 4) == pytest.approx(0.3, abs=1e-10)
    assert estimate_noise_level(R, 4) <= 1e-7  # sqrt of a ~1e-16 eigenvalue floor
    assert estimate_noise_level(R, 4) ** 2 <= 1e-10
    with pytest.raises(SparsityTooLarge):
        estimate_noise_level(R, 12)


def test_denoise_exact(rng):
    inst = random_instance(10, 3, rng)
    R = exact_covariance(inst)
    out = denoise(R + 0.25 * np.eye(10), 3)
    assert np.abs(out.r_hat - R).max() <= 1e-10
    assert out.sigma_hat == pytest.approx(0.5, abs=1e-10)
    assert not out.clamped


def test_denoise_flat_spectrum_clamps():
    with pytest.warns(RuntimeWarning):
        out = denoise(2.0 * np.eye(5), 2)
    np.testing.assert_allclose(out.r_hat, 0, atol=1e-14)
    assert out.clamped


def test_weyl_bound():
    """|R^y - r_hat| <= 2 |R^y_e - empirical| in spectral norm."""
    inst = make_instance(16, 3, separation=2, sigma=0.5, seed=1)
    R = exact_covariance(inst)
    Re = R + 0.25 * np.eye(16)
    for seed in range(20):
        C = empirical_covariance(sample_snapshots(inst, 200, np.random.default_rng(seed)))
        r = denoise(C, 3).r_hat
        assert np.linalg.norm(R - r, 2) <= 2 * np.linalg.norm(Re - C, 2) + 1e-12


def test_denoise_rate():
    """Spectral error of the denoised covariance decays like L^-1/2."""
    inst = make_instance(16, 3, separation=2, sigma=0.5, seed=3)
    R = exact_covariance(inst)
    Ls = [100, 1000, 10000]
    errs = []
    for L in Ls:
        e = [
            np.linalg.norm(denoise(empirical_covariance(sample_snapshots(inst, L, np.random.default_rng([t, L]))), 3).r_hat - R, 2)
            for t in range(50)
        ]
        errs.append(np.mean(e))
    slope = np.polyfit(np.log10(Ls), np.log10(errs), 1)[0]
    assert -0.7 <= slope <= -0.3
