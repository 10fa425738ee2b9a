"""Convex subproblems and the primal-dual interior-point solver.

The subproblem is

    min  c'x + x'Hx/2   s.t.  A_eq x = b_eq,  x in Omega,

with Omega given by bounds, linear inequalities and convex quadratic
inequalities. All inequalities are written ``f_i(x) + s_i = 0, s >= 0`` and
solved with a Mehrotra predictor-corrector method on the augmented
(x, y) Newton system, factorized densely with LAPACK ``sytrf``. Once the
iterates are close enough to identify the active set, a Newton polish on
the active constraints is attempted; it is kept only if it certifies a
smaller KKT residual.

Multiplier convention: ``c + Hx + A_eq' y + J_f' z = 0``, ``z >= 0``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.linalg.lapack import dsytrf, dsytrs

from . import kernels
from .errors import SolverError, UsageError
from .problem import (
    ConvexSet,
    NonlinearMap,
    ParametricProblem,
    PrimalDualPoint,
    QuadConstraint,
    evaluate,
)

log = logging.getLogger(__name__)

SIGMA_MIN = 1e-6

OPTIMAL = "Optimal"
MAX_ITERATIONS = "MaxIterations"
INFEASIBLE = "Infeasible"
NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverConfig:
    kkt_tolerance: float = 1e-8
    max_iterations: int = 100
    fraction_to_boundary: float = 0.995
    initial_barrier: float = 0.1
    regularization: float = 1e-9
    max_regularization: float = 1e-3
    polish: bool = True
    stall_iterations: int = 10
    stall_level: float = 1e-6
    trace_path: Optional[str] = None

    def __post_init__(self):
        if not self.kkt_tolerance > 0:
            raise UsageError("kkt_tolerance must be positive")
        if not 0 < self.fraction_to_boundary < 1:
            raise UsageError("fraction_to_boundary must lie in (0, 1)")
        if self.max_iterations < 1:
            raise UsageError("max_iterations must be >= 1")
        if not self.regularization > 0:
            raise UsageError("regularization must be positive")


@dataclass
class SubproblemSolution:
    z: PrimalDualPoint
    inequality_multipliers: np.ndarray
    status: str
    iterations: int
    final_residual: float
    slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    barrier_history: List[float] = field(default_factory=list)
    polished: bool = False

    @property
    def x(self):
        return self.z.x

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class ConvexSubproblem:
    """Linearization of a parametric problem at ``x_lin`` for parameter ``xi``."""

    x_lin: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    c: np.ndarray
    omega: ConvexSet
    H: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.A_eq.shape[0]

    def as_problem(self) -> ParametricProblem:
        """The subproblem itself as a parametric problem with affine ``g`` and p = 0."""
        return ParametricProblem(
            c=self.c, g=NonlinearMap.linear(self.A_eq, self.b_eq, name="linearized"),
            M=np.zeros((self.m, 0)), omega=self.omega, H=self.H,
        )


def build_subproblem(problem: ParametricProblem, x_lin, xi) -> ConvexSubproblem:
    x_lin = np.asarray(x_lin, dtype=float).reshape(-1)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] != problem.p:
        raise UsageError(f"xi: expected length {problem.p}, got {xi.shape[0]}")
    gx, J = evaluate(problem, x_lin)
    b = J @ x_lin - gx - problem.M @ xi
    return ConvexSubproblem(x_lin=x_lin.copy(), A_eq=J, b_eq=b, c=problem.c,
                            omega=problem.omega, H=problem.H)


class _Inequalities:
    """Stacked ``f(x) <= 0``: lower bounds, upper bounds, linear rows, quadratics."""

    def __init__(self, omega: ConvexSet):
        self.n = omega.n
        self.lo_idx = np.flatnonzero(np.isfinite(omega.lower))
        self.up_idx = np.flatnonzero(np.isfinite(omega.upper))
        self.lo = omega.lower[self.lo_idx]
        self.up = omega.upper[self.up_idx]
        self.G = omega.lin_A if omega.lin_A is not None else np.zeros((0, self.n))
        self.h = omega.lin_b if omega.lin_b is not None else np.zeros(0)
        self.quad = omega.quad
        self.nl, self.nu, self.ng = len(self.lo_idx), len(self.up_idx), self.G.shape[0]
        self.nb = self.nl + self.nu
        self.count = self.nb + self.ng + len(self.quad)
        self.scale = np.concatenate([
            np.abs(self.lo), np.abs(self.up), np.abs(self.h),
            np.array([abs(q.r) for q in self.quad]),
        ])

    def f(self, x):
        out = np.empty(self.count)
        out[:self.nl] = self.lo - x[self.lo_idx]
        out[self.nl:self.nb] = x[self.up_idx] - self.up
        out[self.nb:self.nb + self.ng] = self.G @ x - self.h
        for i, q in enumerate(self.quad):
            out[self.nb + self.ng + i] = q.value(x)
        return out

    def dense_rows(self, x):
        """Jacobian rows of the linear and quadratic pieces (boxes handled apart)."""
        if not self.quad:
            return self.G
        return np.vstack([self.G] + [q.grad(x)[None, :] for q in self.quad])

    def jac(self, x):
        J = np.zeros((self.count, self.n))
        J[np.arange(self.nl), self.lo_idx] = -1.0
        J[self.nl + np.arange(self.nu), self.up_idx] = 1.0
        J[self.nb:] = self.dense_rows(x)
        return J

    def jvp(self, D, dx):
        out = np.empty(self.count)
        out[:self.nl] = -dx[self.lo_idx]
        out[self.nl:self.nb] = dx[self.up_idx]
        out[self.nb:] = D @ dx
        return out

    def jtvp(self, D, w):
        out = np.zeros(self.n)
        np.add.at(out, self.lo_idx, -w[:self.nl])
        np.add.at(out, self.up_idx, w[self.nl:self.nb])
        out += D.T @ w[self.nb:]
        return out

    def jtdj(self, D, d):
        out = (D.T * d[self.nb:]) @ D
        idx = np.arange(self.n)
        diag = np.zeros(self.n)
        np.add.at(diag, self.lo_idx, d[:self.nl])
        np.add.at(diag, self.up_idx, d[self.nl:self.nb])
        out[idx, idx] += diag
        return out

    def curvature(self, z):
        W = np.zeros((self.n, self.n))
        for i, q in enumerate(self.quad):
            W += z[self.nb + self.ng + i] * q.P
        return W


def _cold_start(omega: ConvexSet):
    lo, hi = omega.lower, omega.upper
    x = np.zeros(omega.n)
    both = np.isfinite(lo) & np.isfinite(hi)
    width = np.where(both, hi - lo, 1.0)
    inside = (x > lo + 0.1 * width) & (x < hi - 0.1 * width)
    mid = np.where(both, 0.5 * (np.where(both, lo, 0.0) + np.where(both, hi, 0.0)), 0.0)
    x = np.where(both & ~inside, mid, x)
    only_lo = np.isfinite(lo) & ~np.isfinite(hi)
    only_hi = ~np.isfinite(lo) & np.isfinite(hi)
    x = np.where(only_lo, np.maximum(x, lo + 1.0), x)
    x = np.where(only_hi, np.minimum(x, hi - 1.0), x)
    return x


class _KKTFactor:
    """Regularized augmented system ``[[W + dI, A'], [A, -dI]]`` in LDL' form."""

    def __init__(self, Wf, A, config: SolverConfig):
        n, m = Wf.shape[0], A.shape[0]
        self.n, self.m = n, m
        K0 = np.empty((n + m, n + m))
        K0[:n, :n] = Wf
        K0[:n, n:] = A.T
        K0[n:, :n] = A
        K0[n:, n:] = 0.0
        self.K0 = K0
        delta = config.regularization
        while True:
            K = K0.copy()
            K[np.arange(n), np.arange(n)] += delta
            K[n + np.arange(m), n + np.arange(m)] -= delta
            ldu, ipiv, info = dsytrf(K, lower=1)
            if info >= 0:
                npos, nneg, nzero = kernels.sytrf_inertia(ldu, ipiv)
                if info == 0 and npos == n and nneg == m and nzero == 0:
                    break
            delta *= 10.0
            if delta > config.max_regularization:
                raise np.linalg.LinAlgError("KKT factorization failed (inertia correction exhausted)")
        self.ldu, self.ipiv, self.delta = ldu, ipiv, delta

    def solve(self, rhs):
        sol, info = dsytrs(self.ldu, self.ipiv, rhs, lower=1)
        # one step of iterative refinement against the unregularized matrix
        corr, _ = dsytrs(self.ldu, self.ipiv, rhs - self.K0 @ sol, lower=1)
        return sol + corr


def _residuals(sub, ineq, x, y, z, s):
    D = ineq.dense_rows(x)
    grad = sub.c + (sub.H @ x if sub.H is not None else 0.0)
    r_d = grad + sub.A_eq.T @ y + ineq.jtvp(D, z)
    r_p = sub.A_eq @ x - sub.b_eq
    r_i = ineq.f(x) + s
    return D, r_d, r_p, r_i


def _norm(v):
    return float(np.linalg.norm(v)) if v.size else 0.0


def _ipm_residual(r_d, r_p, r_i, s, z):
    return max(_norm(r_d), _norm(r_p), _norm(r_i), _norm(np.minimum(s, z)))


def certificate(sub: ConvexSubproblem, x, y, z):
    """KKT residual of a candidate (x, y, z) with exact slacks ``s = max(-f, 0)``.

    Used for polished points and as an independent optimality check.
    """
    ineq = _Inequalities(sub.omega)
    fx = ineq.f(x)
    s = np.maximum(-fx, 0.0)
    D = ineq.dense_rows(x)
    grad = sub.c + (sub.H @ x if sub.H is not None else 0.0)
    r_d = grad + sub.A_eq.T @ y + ineq.jtvp(D, z)
    return max(_norm(r_d), _norm(sub.A_eq @ x - sub.b_eq), _norm(np.maximum(fx, 0.0)),
               _norm(np.minimum(z, 0.0)), _norm(np.minimum(s, np.abs(z))))


def _polish(sub, ineq, x, y, z, s, newton_steps=6):
    """Newton on the active-set KKT equations, seeded by the IPM iterate."""
    active = np.flatnonzero(s < z)
    n, m, k = sub.n, sub.m, len(active)
    x, y, zA = x.copy(), y.copy(), z[active].copy()
    H = sub.H if sub.H is not None else np.zeros((n, n))
    quad_rows = active[active >= ineq.nb + ineq.ng] - (ineq.nb + ineq.ng)
    for _ in range(newton_steps):
        JA = ineq.jac(x)[active]
        zfull = np.zeros(ineq.count)
        zfull[active] = zA
        W = H + ineq.curvature(zfull)
        F = np.concatenate([
            sub.c + H @ x + sub.A_eq.T @ y + JA.T @ zA,
            sub.A_eq @ x - sub.b_eq,
            ineq.f(x)[active],
        ])
        if _norm(F) < 1e-15 * (1.0 + _norm(sub.c)):
            break
        K = np.zeros((n + m + k, n + m + k))
        K[:n, :n] = W
        K[:n, n:n + m] = sub.A_eq.T
        K[:n, n + m:] = JA.T
        K[n:n + m, :n] = sub.A_eq
        K[n + m:, :n] = JA
        try:
            step = np.linalg.solve(K, -F)
            if not np.all(np.isfinite(step)) or _norm(K @ step + F) > 1e-10 * (1.0 + _norm(F)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(K, -F, rcond=None)[0]
        x = x + step[:n]
        y = y + step[n:n + m]
        zA = zA + step[n + m:]
        if len(quad_rows) == 0:
            # affine active set: a single Newton step is exact; one more to mop up roundoff
            newton_steps = min(newton_steps, 2)
    zfull = np.zeros(ineq.count)
    zfull[active] = zA
    return x, y, zfull


def _merit(sub, ineq, x, y, z, s, target):
    _, r_d, r_p, r_i = _residuals(sub, ineq, x, y, z, s)
    return float(np.sqrt(_norm(r_d) ** 2 + _norm(r_p) ** 2 + _norm(r_i) ** 2
                         + _norm(s * z - target) ** 2))


def _backtrack(sub, ineq, x, y, z, s, dx, dy, ds, dz, alpha, target, max_halvings=30):
    """Armijo backtracking on the residual norm; quadratic rows make full steps overshoot."""
    phi0 = _merit(sub, ineq, x, y, z, s, target)
    for _ in range(max_halvings):
        phi = _merit(sub, ineq, x + alpha * dx, y + alpha * dy, z + alpha * dz, s + alpha * ds, target)
        if phi <= (1.0 - 1e-4 * alpha) * phi0:
            return alpha
        alpha *= 0.5
    return None


def _write_trace(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "dual_res", "primal_res", "ineq_res", "mu", "barrier", "step", "residual"])
        w.writerows(rows)


def solve(sub: ConvexSubproblem, config: Optional[SolverConfig] = None,
          warm_start: Optional[PrimalDualPoint] = None,
          warm_ineq: Optional[np.ndarray] = None) -> SubproblemSolution:
    """Solve the convex subproblem with a Mehrotra predictor-corrector IPM.

    ``warm_start`` supplies (x, y); slacks are pushed into the strict
    interior before the first iteration. ``warm_ineq`` optionally carries
    previous inequality multipliers.
    """
    cfg = config or SolverConfig()
    n, m = sub.n, sub.m
    ineq = _Inequalities(sub.omega)
    ni = ineq.count
    H = sub.H
    tol = cfg.kkt_tolerance
    tau = cfg.fraction_to_boundary

    if warm_start is not None:
        x = np.array(warm_start.x, dtype=float)
        if x.shape[0] != n:
            raise UsageError("warm start has wrong primal dimension")
        y = np.array(warm_start.lam, dtype=float) if len(warm_start.lam) == m else np.zeros(m)
        s = np.maximum(-ineq.f(x), 1e-3 * (1.0 + ineq.scale))
        if warm_ineq is not None and len(warm_ineq) == ni:
            z = np.maximum(np.asarray(warm_ineq, dtype=float), 1e-3)
        else:
            z = 1e-3 / s
    else:
        x = _cold_start(sub.omega)
        y = np.zeros(m)
        s = np.maximum(-ineq.f(x), 1.0)
        z = cfg.initial_barrier / s

    trace = []
    barrier_hist: List[float] = []
    pinf_hist: List[float] = []
    status = MAX_ITERATIONS
    it = 0
    res = np.inf
    polished = False

    for it in range(1, cfg.max_iterations + 1):
        D, r_d, r_p, r_i = _residuals(sub, ineq, x, y, z, s)
        res = _ipm_residual(r_d, r_p, r_i, s, z)
        mu = float(s @ z) / ni if ni else 0.0
        if res <= tol:
            status = OPTIMAL
            break

        pinf = max(_norm(r_p), _norm(r_i))
        pinf_hist.append(pinf)
        k = cfg.stall_iterations
        if len(pinf_hist) > k and pinf > cfg.stall_level and pinf > 0.5 * pinf_hist[-k - 1]:
            status = INFEASIBLE
            break

        if cfg.polish and ni and mu < 1e-6 and max(_norm(r_d), pinf) < 1e-5:
            xp, yp, zp = _polish(sub, ineq, x, y, z, s)
            cert = certificate(sub, xp, yp, zp)
            if cert <= tol:
                x, y, z = xp, yp, zp
                s = np.maximum(-ineq.f(x), 0.0)
                res = cert
                polished = True
                status = OPTIMAL
                break

        d = z / s if ni else np.zeros(0)
        Wf = ineq.jtdj(D, d)
        if H is not None:
            Wf += H
        if ineq.quad:
            Wf += ineq.curvature(z)
        A = sub.A_eq
        try:
            fac = _KKTFactor(Wf, A, cfg)
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break

        def newton(rc, ri=r_i):
            w = (rc + z * ri) / s if ni else np.zeros(0)
            rhs = np.concatenate([-r_d - ineq.jtvp(D, w), -r_p])
            sol = fac.solve(rhs)
            dx, dy = sol[:n], sol[n:]
            ds = -ri - ineq.jvp(D, dx)
            dz = (rc - z * ds) / s if ni else np.zeros(0)
            return dx, dy, ds, dz

        if ni:
            dx_a, dy_a, ds_a, dz_a = newton(-s * z)
            a_aff = min(kernels.fraction_to_boundary(s, ds_a, 1.0),
                        kernels.fraction_to_boundary(z, dz_a, 1.0))
            mu_aff = float((s + a_aff * ds_a) @ (z + a_aff * dz_a)) / ni
            sigma = min(1.0, max((mu_aff / mu) ** 3, SIGMA_MIN)) if mu > 0 else SIGMA_MIN
            target = sigma * mu
            if len(barrier_hist) >= 2:
                target = min(target, barrier_hist[-1])
            barrier_hist.append(target)
            dx, dy, ds, dz = newton(target - s * z - ds_a * dz_a)
            alpha = min(kernels.fraction_to_boundary(s, ds, tau),
                        kernels.fraction_to_boundary(z, dz, tau))
            if ineq.quad:
                a_bt = _backtrack(sub, ineq, x, y, z, s, dx, dy, ds, dz, alpha, target)
                if a_bt is None:
                    # corrector is not a descent direction for the merit: plain Newton
                    dx, dy, ds, dz = newton(target - s * z)
                    alpha = min(kernels.fraction_to_boundary(s, ds, tau),
                                kernels.fraction_to_boundary(z, dz, tau))
                    a_bt = _backtrack(sub, ineq, x, y, z, s, dx, dy, ds, dz, alpha, target)
                alpha = a_bt if a_bt is not None else alpha * 2.0 ** -30
        else:
            dx, dy, ds, dz = newton(np.zeros(0))
            alpha = 1.0
            barrier_hist.append(0.0)

        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
            status = NUMERICAL_FAILURE
            break
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz
        if cfg.trace_path:
            trace.append([it, _norm(r_d), _norm(r_p), _norm(r_i), mu, barrier_hist[-1], alpha, res])
    else:
        D, r_d, r_p, r_i = _residuals(sub, ineq, x, y, z, s)
        res = _ipm_residual(r_d, r_p, r_i, s, z)
        if res <= tol:
            status = OPTIMAL

    if cfg.trace_path:
        _write_trace(cfg.trace_path, trace)
    if status != OPTIMAL:
        log.debug("IPM stopped with %s after %d iterations (residual %.3e)", status, it, res)
    return SubproblemSolution(
        z=PrimalDualPoint(x, y),
        inequality_multipliers=z,
        status=status,
        iterations=it,
        final_residual=float(res),
        slacks=s,
        barrier_history=barrier_hist,
        polished=polished,
    )


def project_onto_omega(omega: ConvexSet, y, tol=1e-10) -> np.ndarray:
    """Euclidean projection onto ``omega`` (exact clipping for pure boxes)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if omega.is_box:
        return np.clip(y, omega.lower, omega.upper)
    n = omega.n
    sub = ConvexSubproblem(x_lin=y, A_eq=np.zeros((0, n)), b_eq=np.zeros(0),
                           c=-y, omega=omega, H=np.eye(n))
    sol = solve(sub, SolverConfig(kkt_tolerance=tol))
    if not sol.ok:
        raise SolverError(f"projection failed with status {sol.status}", status=sol.status, solution=sol)
    return sol.x


def phase_one(A_eq, b_eq, omega: ConvexSet, config: Optional[SolverConfig] = None, radius=None):
    """Minimize the inf-norm violation ``t`` of ``A_eq x = b_eq`` over ``omega``.

    Unbounded coordinates are confined to ``|x_i| <= radius`` (default
    ``1e4 * (1 + max finite bound)``): with an unbounded feasible region the
    log barrier of a quadratic row can have no minimizer at all.
    The problem is feasible by construction, so the stall rule is switched off;
    a free epigraph variable makes it slow to converge but not infeasible.
    Returns ``(t, solution)``; the solution's primal vector is ``(x, t)``.
    """
    cfg = replace(config or SolverConfig(), stall_iterations=10 ** 9)
    cfg = replace(cfg, max_iterations=max(cfg.max_iterations, 500))
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    n = omega.n
    m = b_eq.shape[0]
    A_eq = A_eq.reshape(m, n)
    ones = np.ones((m, 1))
    rows = [np.hstack([A_eq, -ones]), np.hstack([-A_eq, -ones])]
    rhs = [b_eq, -b_eq]
    if omega.lin_A is not None:
        rows.append(np.hstack([omega.lin_A, np.zeros((omega.n_lin, 1))]))
        rhs.append(omega.lin_b)
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    quad = []
    for q in omega.quad:
        P = np.zeros((n + 1, n + 1))
        P[:n, :n] = q.P
        quad.append(QuadConstraint(P, np.append(q.q, 0.0), q.r))
    finite = np.concatenate([omega.lower[np.isfinite(omega.lower)], omega.upper[np.isfinite(omega.upper)]])
    if radius is None:
        radius = 1e4 * (1.0 + (np.abs(finite).max() if finite.size else 0.0))
    lo = np.where(np.isfinite(omega.lower), omega.lower, -radius)
    hi = np.where(np.isfinite(omega.upper), omega.upper, radius)
    ext = ConvexSet(np.append(lo, 0.0), np.append(hi, radius),
                    G if G.shape[0] else None, h if G.shape[0] else None, quad)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    sub = ConvexSubproblem(x_lin=np.zeros(n + 1), A_eq=np.zeros((0, n + 1)), b_eq=np.zeros(0),
                           c=c, omega=ext)
    sol = solve(sub, cfg)
    return float(sol.x[-1]), sol
