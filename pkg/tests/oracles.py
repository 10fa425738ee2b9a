"""Independent reference solvers used only by the tests."""
import itertools

import numpy as np


def active_set_qp(H, c, A, b, lo, hi, tol=1e-9):
    """Brute-force solve of  min x'Hx/2 + c'x  s.t.  Ax = b, lo <= x <= hi  (H positive definite).

    Enumerates every assignment free / at lower / at upper for each variable,
    solves the equality-constrained QP on the free variables, and keeps the
    assignments that are primal feasible with correctly signed bound
    multipliers. Returns (x, objective) of the best KKT point found.
    """
    n = len(c)
    m = A.shape[0]
    best = None
    for states in itertools.product((0, 1, 2), repeat=n):
        states = np.array(states)
        if np.any((states == 1) & ~np.isfinite(lo)) or np.any((states == 2) & ~np.isfinite(hi)):
            continue
        fixed = states != 0
        xf = np.where(states == 1, lo, np.where(states == 2, hi, 0.0))
        xf = np.where(fixed, xf, 0.0)
        F = np.flatnonzero(~fixed)
        k = len(F)
        # KKT on free variables: H_FF x_F + A_F' y = -(c_F + H_F,fixed x_fixed), A_F x_F = b - A_fixed x_fixed
        K = np.zeros((k + m, k + m))
        K[:k, :k] = H[np.ix_(F, F)]
        K[:k, k:] = A[:, F].T
        K[k:, :k] = A[:, F]
        rhs = np.concatenate([-(c[F] + H[F] @ xf), b - A @ xf])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            continue
        if not np.allclose(K @ sol, rhs, atol=1e-10):
            continue
        x = xf.copy()
        x[F] = sol[:k]
        y = sol[k:]
        if np.any(x < lo - tol) or np.any(x > hi + tol):
            continue
        # bound multipliers from stationarity: g = Hx + c + A'y = mu_lo - mu_hi
        g = H @ x + c + A.T @ y
        if np.any(g[states == 1] < -tol) or np.any(g[states == 2] > tol):
            continue
        obj = 0.5 * x @ H @ x + c @ x
        if best is None or obj < best[1] - 1e-12:
            best = (x, obj)
    return best


def random_qp(rng, n=None, m=None):
    """Well-conditioned strictly feasible box QP with n <= 6, m <= 3."""
    n = n or int(rng.integers(2, 7))
    m = m if m is not None else int(rng.integers(0, min(3, n - 1) + 1))
    L = rng.standard_normal((n, n))
    H = L @ L.T / n + 0.5 * np.eye(n)
    c = 2.0 * rng.standard_normal(n)
    lo = -rng.uniform(0.2, 2.0, n)
    hi = rng.uniform(0.2, 2.0, n)
    A = rng.standard_normal((m, n))
    x_feas = lo + (hi - lo) * rng.uniform(0.3, 0.7, n)
    b = A @ x_feas
    return H, c, A, b, lo, hi
