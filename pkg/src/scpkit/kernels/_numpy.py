"""Pure-numpy reference kernels.

Every function here has a loop-based twin in ``_numba.py`` with the same
signature; the two are checked against each other in the test suite.
"""
import numpy as np


def _split(x, off, N):
    ns = 6 * (N + 1)
    X = x[off:off + ns].reshape(N + 1, 6)
    U = x[off + ns:off + ns + 2 * N].reshape(N, 2)
    return X, U


def hover_rhs(state, u, mass, inertia, arm):
    """Continuous-time hovercraft vector field for one state / control pair."""
    th = state[2]
    thrust = u[0] + u[1]
    return np.array([
        state[3],
        state[4],
        state[5],
        thrust * np.cos(th) / mass,
        thrust * np.sin(th) / mass,
        arm * (u[0] - u[1]) / inertia,
    ])


def hover_g(x, off, N, dt, mass, inertia, arm):
    X, U = _split(x, off, N)
    th = X[:-1, 2]
    thrust = U[:, 0] + U[:, 1]
    f = np.empty((N, 6))
    f[:, 0:3] = X[:-1, 3:6]
    f[:, 3] = thrust * np.cos(th) / mass
    f[:, 4] = thrust * np.sin(th) / mass
    f[:, 5] = arm * (U[:, 0] - U[:, 1]) / inertia
    out = np.empty(6 * (N + 1))
    out[:6] = X[0]
    out[6:] = (X[1:] - X[:-1] - dt * f).ravel()
    return out


def hover_jac(x, off, N, dt, mass, inertia, arm):
    n = x.shape[0]
    X, U = _split(x, off, N)
    J = np.zeros((6 * (N + 1), n))
    eye6 = np.eye(6)
    J[0:6, off:off + 6] = eye6
    uoff = off + 6 * (N + 1)
    for k in range(N):
        rows = slice(6 * (k + 1), 6 * (k + 2))
        th = X[k, 2]
        thrust = U[k, 0] + U[k, 1]
        c, s = np.cos(th), np.sin(th)
        A = eye6.copy()
        A[0, 3] = A[1, 4] = A[2, 5] = dt
        A[3, 2] = -dt * thrust * s / mass
        A[4, 2] = dt * thrust * c / mass
        B = np.zeros((6, 2))
        B[3, :] = dt * c / mass
        B[4, :] = dt * s / mass
        B[5, 0] = dt * arm / inertia
        B[5, 1] = -dt * arm / inertia
        J[rows, off + 6 * (k + 1):off + 6 * (k + 2)] = eye6
        J[rows, off + 6 * k:off + 6 * (k + 1)] = -A
        J[rows, uoff + 2 * k:uoff + 2 * (k + 1)] = -B
    return J


def hover_lag_hess(x, lam, off, N, dt, mass, inertia, arm):
    """Sum_i lam_i * Hess(g_i)(x); only (theta, u1, u2) couplings are nonzero."""
    n = x.shape[0]
    X, U = _split(x, off, N)
    E = np.zeros((n, n))
    uoff = off + 6 * (N + 1)
    ks = np.arange(N)
    th = X[:-1, 2]
    thrust = U[:, 0] + U[:, 1]
    c, s = np.cos(th), np.sin(th)
    l3 = lam[6 * (ks + 1) + 3]
    l4 = lam[6 * (ks + 1) + 4]
    it = off + 6 * ks + 2
    # g rows carry -dt * f, hence the leading minus signs
    E[it, it] = -dt / mass * (l3 * (-thrust * c) + l4 * (-thrust * s))
    cross = -dt / mass * (l3 * (-s) + l4 * c)
    for j in range(2):
        iu = uoff + 2 * ks + j
        E[it, iu] = cross
        E[iu, it] = cross
    return E


def hover_rk4(state, u, dt, substeps, mass, inertia, arm):
    h = dt / substeps
    z = np.array(state, dtype=float)
    for _ in range(substeps):
        k1 = hover_rhs(z, u, mass, inertia, arm)
        k2 = hover_rhs(z + 0.5 * h * k1, u, mass, inertia, arm)
        k3 = hover_rhs(z + 0.5 * h * k2, u, mass, inertia, arm)
        k4 = hover_rhs(z + h * k3, u, mass, inertia, arm)
        z = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return z


def sytrf_inertia(ldu, ipiv):
    """Inertia (n_pos, n_neg, n_zero) of a lower Bunch-Kaufman factorization.

    ``ldu``/``ipiv`` are the raw outputs of LAPACK ``dsytrf`` with lower=1
    (1-based pivots, negative entries flag 2x2 blocks).
    """
    n = ldu.shape[0]
    d = np.diag(ldu)
    two = np.zeros(n, dtype=bool)
    two[:-1] = (ipiv[:-1] < 0) & (ipiv[:-1] == ipiv[1:])
    # a 2x2 block starts at i only if i is not itself the tail of a block
    starts = np.zeros(n, dtype=bool)
    i = 0
    while i < n:
        if two[i]:
            starts[i] = True
            i += 2
        else:
            i += 1
    tails = np.roll(starts, 1)
    tails[0] = False
    single = ~(starts | tails)
    npos = int(np.sum(d[single] > 0))
    nneg = int(np.sum(d[single] < 0))
    nzero = int(np.sum(d[single] == 0))
    idx = np.flatnonzero(starts)
    a, b, c = d[idx], ldu[idx + 1, idx], d[idx + 1]
    det = a * c - b * b
    tr = a + c
    flat = det == 0
    npos += int(np.sum(det < 0) + 2 * np.sum((det > 0) & (tr > 0)) + np.sum(flat & (tr > 0)))
    nneg += int(np.sum(det < 0) + 2 * np.sum((det > 0) & (tr < 0)) + np.sum(flat & (tr < 0)))
    nzero += int(np.sum(flat) + np.sum(flat & (tr == 0)))
    return npos, nneg, nzero


def fraction_to_boundary(v, dv, tau):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, tau * np.min(-v[neg] / dv[neg])))
