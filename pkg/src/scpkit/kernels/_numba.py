"""Loop-form kernels compiled with numba; signatures mirror ``_numpy.py``."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def hover_rhs(state, u, mass, inertia, arm):
    out = np.empty(6)
    th = state[2]
    thrust = u[0] + u[1]
    out[0] = state[3]
    out[1] = state[4]
    out[2] = state[5]
    out[3] = thrust * math.cos(th) / mass
    out[4] = thrust * math.sin(th) / mass
    out[5] = arm * (u[0] - u[1]) / inertia
    return out


@njit(cache=True)
def hover_g(x, off, N, dt, mass, inertia, arm):
    out = np.empty(6 * (N + 1))
    uoff = off + 6 * (N + 1)
    for i in range(6):
        out[i] = x[off + i]
    for k in range(N):
        a = off + 6 * k
        b = a + 6
        r = 6 * (k + 1)
        th = x[a + 2]
        u1 = x[uoff + 2 * k]
        u2 = x[uoff + 2 * k + 1]
        thrust = u1 + u2
        out[r + 0] = x[b + 0] - x[a + 0] - dt * x[a + 3]
        out[r + 1] = x[b + 1] - x[a + 1] - dt * x[a + 4]
        out[r + 2] = x[b + 2] - x[a + 2] - dt * x[a + 5]
        out[r + 3] = x[b + 3] - x[a + 3] - dt * thrust * math.cos(th) / mass
        out[r + 4] = x[b + 4] - x[a + 4] - dt * thrust * math.sin(th) / mass
        out[r + 5] = x[b + 5] - x[a + 5] - dt * arm * (u1 - u2) / inertia
    return out


@njit(cache=True)
def hover_jac(x, off, N, dt, mass, inertia, arm):
    n = x.shape[0]
    J = np.zeros((6 * (N + 1), n))
    uoff = off + 6 * (N + 1)
    for i in range(6):
        J[i, off + i] = 1.0
    for k in range(N):
        a = off + 6 * k
        b = a + 6
        r = 6 * (k + 1)
        th = x[a + 2]
        thrust = x[uoff + 2 * k] + x[uoff + 2 * k + 1]
        c = math.cos(th)
        s = math.sin(th)
        for i in range(6):
            J[r + i, b + i] = 1.0
            J[r + i, a + i] = -1.0
        J[r + 0, a + 3] = -dt
        J[r + 1, a + 4] = -dt
        J[r + 2, a + 5] = -dt
        J[r + 3, a + 2] = dt * thrust * s / mass
        J[r + 4, a + 2] = -dt * thrust * c / mass
        iu = uoff + 2 * k
        J[r + 3, iu] = -dt * c / mass
        J[r + 3, iu + 1] = -dt * c / mass
        J[r + 4, iu] = -dt * s / mass
        J[r + 4, iu + 1] = -dt * s / mass
        J[r + 5, iu] = -dt * arm / inertia
        J[r + 5, iu + 1] = dt * arm / inertia
    return J


@njit(cache=True)
def hover_lag_hess(x, lam, off, N, dt, mass, inertia, arm):
    n = x.shape[0]
    E = np.zeros((n, n))
    uoff = off + 6 * (N + 1)
    for k in range(N):
        it = off + 6 * k + 2
        th = x[it]
        iu = uoff + 2 * k
        thrust = x[iu] + x[iu + 1]
        c = math.cos(th)
        s = math.sin(th)
        l3 = lam[6 * (k + 1) + 3]
        l4 = lam[6 * (k + 1) + 4]
        E[it, it] = dt / mass * thrust * (l3 * c + l4 * s)
        cross = dt / mass * (l3 * s - l4 * c)
        E[it, iu] = cross
        E[iu, it] = cross
        E[it, iu + 1] = cross
        E[iu + 1, it] = cross
    return E


@njit(cache=True)
def hover_rk4(state, u, dt, substeps, mass, inertia, arm):
    h = dt / substeps
    z = state.astype(np.float64).copy()
    for _ in range(substeps):
        k1 = hover_rhs(z, u, mass, inertia, arm)
        k2 = hover_rhs(z + 0.5 * h * k1, u, mass, inertia, arm)
        k3 = hover_rhs(z + 0.5 * h * k2, u, mass, inertia, arm)
        k4 = hover_rhs(z + h * k3, u, mass, inertia, arm)
        z = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return z


@njit(cache=True)
def sytrf_inertia(ldu, ipiv):
    n = ldu.shape[0]
    npos = 0
    nneg = 0
    nzero = 0
    i = 0
    while i < n:
        if i + 1 < n and ipiv[i] < 0 and ipiv[i] == ipiv[i + 1]:
            a = ldu[i, i]
            b = ldu[i + 1, i]
            c = ldu[i + 1, i + 1]
            det = a * c - b * b
            tr = a + c
            if det < 0:
                npos += 1
                nneg += 1
            elif det > 0:
                if tr > 0:
                    npos += 2
                else:
                    nneg += 2
            else:
                nzero += 1
                if tr > 0:
                    npos += 1
                elif tr < 0:
                    nneg += 1
                else:
                    nzero += 1
            i += 2
        else:
            d = ldu[i, i]
            if d > 0:
                npos += 1
            elif d < 0:
                nneg += 1
            else:
                nzero += 1
            i += 1
    return npos, nneg, nzero


@njit(cache=True)
def fraction_to_boundary(v, dv, tau):
    alpha = 1.0
    for i in range(v.shape[0]):
        if dv[i] < 0:
            cand = -tau * v[i] / dv[i]
            if cand < alpha:
                alpha = cand
    return alpha
