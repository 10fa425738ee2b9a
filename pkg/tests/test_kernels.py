import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg as sla

from scpkit import kernels

nb = kernels.numba_impl()
npk = kernels.numpy_impl
ARGS = (1, 15, 0.05, 0.974, 0.0125, 0.0485)


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def test_hover_kernels_agree(rng):
    n = 1 + 6 * 16 + 2 * 15
    for _ in range(5):
        x = rng.uniform(-1, 1, n)
        lam = rng.standard_normal(96)
        assert np.allclose(nb.hover_g(x, *ARGS), npk.hover_g(x, *ARGS), rtol=0, atol=1e-14)
        assert np.allclose(nb.hover_jac(x, *ARGS), npk.hover_jac(x, *ARGS), rtol=0, atol=1e-14)
        assert np.allclose(nb.hover_lag_hess(x, lam, *ARGS), npk.hover_lag_hess(x, lam, *ARGS),
                           rtol=0, atol=1e-13)


def test_rk4_and_rhs_agree(rng):
    s, u = rng.standard_normal(6), rng.uniform(-0.1, 0.3, 2)
    assert np.allclose(nb.hover_rhs(s, u, 0.974, 0.0125, 0.0485), npk.hover_rhs(s, u, 0.974, 0.0125, 0.0485))
    assert np.allclose(nb.hover_rk4(s, u, 0.05, 10, 0.974, 0.0125, 0.0485),
                       npk.hover_rk4(s, u, 0.05, 10, 0.974, 0.0125, 0.0485), rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_inertia_matches_eigenvalues(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    B = rng.standard_normal((n, n))
    K = B + B.T
    if seed % 4 == 0:
        K[:, 0] = K[0, :] = 0.0  # exact zero eigenvalue
    lu, ipiv, info = sla.lapack.dsytrf(K, lower=1)
    eig = np.linalg.eigvalsh(K)
    scale = 1e-10 * np.abs(eig).max()
    expect = (int(np.sum(eig > scale)), int(np.sum(eig < -scale)), int(np.sum(np.abs(eig) <= scale)))
    assert npk.sytrf_inertia(lu, ipiv) == expect
    assert nb.sytrf_inertia(lu, ipiv) == expect


def test_fraction_to_boundary():
    v = np.array([1.0, 2.0, 0.5])
    dv = np.array([-2.0, 1.0, -0.25])
    for mod in (npk, nb):
        assert mod.fraction_to_boundary(v, dv, 0.99) == pytest.approx(0.495)
        assert mod.fraction_to_boundary(v, np.abs(dv), 0.99) == 1.0


def _backend_in_subprocess(value):
    env = dict(os.environ, SCPKIT_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "import scpkit.kernels as k; print(k.BACKEND)"],
                          env=env, capture_output=True, text=True)


@pytest.mark.parametrize("value", ["numpy", "numba"])
def test_backend_selection(value):
    out = _backend_in_subprocess(value)
    assert out.returncode == 0 and out.stdout.strip() == value


def test_invalid_backend_rejected():
    out = _backend_in_subprocess("fortran")
    assert out.returncode != 0 and "SCPKIT_BACKEND" in out.stderr
