"""Parametric problems ``min c'x (+ x'Hx/2)  s.t.  g(x) + M xi = 0,  x in Omega``.

Also holds the residual and derivative evaluations every other module
shares: KKT residuals, finite-difference Jacobian checks, the
multiplier-weighted constraint curvature and the Slater check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, EvaluationError, SolverError, UsageError

PSD_TOL = 1e-10


def _vec(a, name, n=None):
    v = np.asarray(a, dtype=float).reshape(-1)
    if n is not None and v.shape[0] != n:
        raise UsageError(f"{name}: expected length {n}, got {v.shape[0]}")
    return v


def _mat(a, name, shape=None):
    A = np.atleast_2d(np.asarray(a, dtype=float))
    if shape is not None and A.shape != shape:
        raise UsageError(f"{name}: expected shape {shape}, got {A.shape}")
    return A


def _check_psd(P, name):
    S = 0.5 * (P + P.T)
    if S.size and np.linalg.eigvalsh(S).min() < -PSD_TOL:
        raise UsageError(f"{name} is not positive semidefinite")
    return S


@dataclass(frozen=True)
class PrimalDualPoint:
    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x, "x"))
        object.__setattr__(self, "lam", _vec(self.lam, "lam"))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam])

    def distance(self, other: "PrimalDualPoint") -> float:
        return float(np.linalg.norm(self.vector - other.vector))


@dataclass(frozen=True)
class NonlinearMap:
    """``g: R^n -> R^m`` with its Jacobian and optional second derivatives.

    ``hess(x)`` returns the stack of component Hessians, shape ``(m, n, n)``.
    ``lag_hess(x, lam)`` returns ``sum_i lam_i * hess_i(x)`` directly and is
    preferred when both are present.
    """

    n: int
    m: int
    fun: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lag_hess: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    fd_hessian: bool = True
    name: str = ""

    @classmethod
    def linear(cls, A, b=None, name="linear"):
        A = _mat(A, "A")
        m, n = A.shape
        b = np.zeros(m) if b is None else _vec(b, "b", m)
        zero = np.zeros((n, n))
        return cls(
            n=n, m=m,
            fun=lambda x: A @ x - b,
            jac=lambda x: A.copy(),
            hess=lambda x: np.zeros((m, n, n)),
            lag_hess=lambda x, lam: zero.copy(),
            name=name,
        )


@dataclass(frozen=True)
class QuadConstraint:
    """``0.5 x'Px + q'x + r <= 0`` with ``P`` positive semidefinite."""

    P: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def __post_init__(self):
        P = _mat(self.P, "P")
        n = P.shape[0]
        if P.shape != (n, n):
            raise UsageError("quadratic constraint matrix must be square")
        object.__setattr__(self, "P", _check_psd(P, "quadratic constraint P"))
        object.__setattr__(self, "q", _vec(self.q, "q", n))
        object.__setattr__(self, "r", float(self.r))

    def value(self, x):
        return 0.5 * x @ self.P @ x + self.q @ x + self.r

    def grad(self, x):
        return self.P @ x + self.q


@dataclass(frozen=True)
class ConvexSet:
    """Box, linear inequality ``lin_A x <= lin_b`` and convex quadratic pieces."""

    lower: np.ndarray
    upper: np.ndarray
    lin_A: Optional[np.ndarray] = None
    lin_b: Optional[np.ndarray] = None
    quad: Sequence[QuadConstraint] = field(default_factory=tuple)

    def __post_init__(self):
        lo = _vec(self.lower, "lower")
        n = lo.shape[0]
        hi = _vec(self.upper, "upper", n)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise UsageError("bounds must not be NaN")
        if np.any(lo > hi):
            i = int(np.flatnonzero(lo > hi)[0])
            raise UsageError(f"lower > upper at index {i}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if (self.lin_A is None) != (self.lin_b is None):
            raise UsageError("lin_A and lin_b must be given together")
        if self.lin_A is not None:
            G = _mat(self.lin_A, "lin_A")
            if G.shape[1] != n:
                raise UsageError(f"lin_A: expected {n} columns, got {G.shape[1]}")
            object.__setattr__(self, "lin_A", G)
            object.__setattr__(self, "lin_b", _vec(self.lin_b, "lin_b", G.shape[0]))
        quad = tuple(self.quad)
        for qc in quad:
            if qc.P.shape[0] != n:
                raise UsageError("quadratic constraint dimension mismatch")
        object.__setattr__(self, "quad", quad)

    @classmethod
    def box(cls, lower, upper):
        return cls(lower, upper)

    @classmethod
    def free(cls, n):
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def n_lin(self) -> int:
        return 0 if self.lin_A is None else self.lin_A.shape[0]

    @property
    def is_box(self) -> bool:
        return self.n_lin == 0 and not self.quad

    def violation(self, x) -> float:
        """Largest constraint violation (0 when ``x`` is in the set)."""
        x = _vec(x, "x", self.n)
        v = max(0.0, float(np.max(self.lower - x, initial=0.0)),
                float(np.max(x - self.upper, initial=0.0)))
        if self.lin_A is not None:
            v = max(v, float(np.max(self.lin_A @ x - self.lin_b, initial=0.0)))
        for qc in self.quad:
            v = max(v, qc.value(x))
        return v

    def contains(self, x, tol=0.0) -> bool:
        return self.violation(x) <= tol

    def shrink(self, eps):
        """Tighten every constraint by ``eps`` (bounds, rhs and quad offsets)."""
        lo = np.where(np.isfinite(self.lower), self.lower + eps, self.lower)
        hi = np.where(np.isfinite(self.upper), self.upper - eps, self.upper)
        # a bound pair narrower than 2*eps collapses to its midpoint
        bad = lo > hi
        mid = np.where(bad, 0.5 * (np.where(bad, self.lower, 0.0) + np.where(bad, self.upper, 0.0)), 0.0)
        lo = np.where(bad, mid, lo)
        hi = np.where(bad, mid, hi)
        lin_b = None if self.lin_b is None else self.lin_b - eps
        quad = tuple(QuadConstraint(q.P, q.q, q.r + eps) for q in self.quad)
        return ConvexSet(lo, hi, self.lin_A, lin_b, quad)


@dataclass(frozen=True)
class ParametricProblem:
    c: np.ndarray
    g: NonlinearMap
    M: np.ndarray
    omega: ConvexSet
    H: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        c = _vec(self.c, "c")
        n = c.shape[0]
        if self.g.n != n:
            raise UsageError(f"g maps from R^{self.g.n} but c has length {n}")
        M = np.asarray(self.M, dtype=float)
        if M.size == 0 and M.ndim < 2:
            M = np.zeros((self.g.m, 0))
        if M.ndim != 2 or M.shape[0] != self.g.m:
            raise UsageError(f"M must be a matrix with {self.g.m} rows, got shape {M.shape}")
        if self.omega.n != n:
            raise UsageError(f"omega has dimension {self.omega.n}, expected {n}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "M", M)
        if self.H is not None:
            H = _mat(self.H, "H", (n, n))
            object.__setattr__(self, "H", _check_psd(H, "H"))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.g.m

    @property
    def p(self) -> int:
        return self.M.shape[1]

    def objective(self, x) -> float:
        val = float(self.c @ x)
        if self.H is not None:
            val += 0.5 * float(x @ self.H @ x)
        return val

    def cost_gradient(self, x) -> np.ndarray:
        return self.c if self.H is None else self.c + self.H @ x


@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    feasibility: float

    @property
    def total(self) -> float:
        return max(self.stationarity, self.feasibility)


def _check_finite(v, what):
    bad = ~np.isfinite(v)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise EvaluationError(f"{what} is not finite at component {tuple(int(i) for i in idx)}")


def evaluate(problem: ParametricProblem, x):
    """Return ``(g(x), g'(x))``."""
    x = _vec(x, "x", problem.n)
    gx = np.asarray(problem.g.fun(x), dtype=float).reshape(-1)
    _check_finite(gx, "g(x)")
    if gx.shape[0] != problem.m:
        raise UsageError(f"g returned {gx.shape[0]} values, expected {problem.m}")
    J = np.asarray(problem.g.jac(x), dtype=float)
    _check_finite(J, "g'(x)")
    if J.shape != (problem.m, problem.n):
        raise UsageError(f"Jacobian has shape {J.shape}, expected {(problem.m, problem.n)}")
    return gx, J


def kkt_residual(problem: ParametricProblem, z: PrimalDualPoint, xi, proj_tol=1e-10) -> KKTResidual:
    """Projected natural residual of the KKT system at ``z``.

    stationarity = ||x - P_Omega(x - (c + Hx + g'(x)' lam))||, feasibility =
    ||g(x) + M xi||. Both vanish exactly at KKT points.
    """
    from .convex import project_onto_omega

    xi = _vec(xi, "xi", problem.p)
    lam = _vec(z.lam, "lam", problem.m)
    gx, J = evaluate(problem, z.x)
    grad = problem.cost_gradient(z.x) + J.T @ lam
    proj = project_onto_omega(problem.omega, z.x - grad, tol=proj_tol)
    return KKTResidual(
        stationarity=float(np.linalg.norm(z.x - proj)),
        feasibility=float(np.linalg.norm(gx + problem.M @ xi)),
    )


def check_jacobian(problem_or_map, x, step=1e-6) -> float:
    """Max entrywise relative error of the analytic Jacobian vs central differences."""
    g = problem_or_map.g if isinstance(problem_or_map, ParametricProblem) else problem_or_map
    if step <= 0:
        raise UsageError("step must be positive")
    x = _vec(x, "x", g.n)
    J = np.asarray(g.jac(x), dtype=float).reshape(g.m, g.n)
    Jfd = np.empty_like(J)
    for j in range(g.n):
        e = np.zeros(g.n)
        e[j] = step
        Jfd[:, j] = (np.asarray(g.fun(x + e)) - np.asarray(g.fun(x - e))) / (2 * step)
    _check_finite(Jfd, "finite-difference Jacobian")
    err = np.abs(J - Jfd) / np.maximum(1.0, np.abs(J))
    return float(err.max()) if err.size else 0.0


def jacobian_error_location(g: NonlinearMap, x, step=1e-6):
    """Return ``(row, col, error)`` of the worst Jacobian entry."""
    x = _vec(x, "x", g.n)
    J = np.asarray(g.jac(x), dtype=float).reshape(g.m, g.n)
    Jfd = np.empty_like(J)
    for j in range(g.n):
        e = np.zeros(g.n)
        e[j] = step
        Jfd[:, j] = (np.asarray(g.fun(x + e)) - np.asarray(g.fun(x - e))) / (2 * step)
    err = np.abs(J - Jfd) / np.maximum(1.0, np.abs(J))
    i, j = np.unravel_index(int(np.argmax(err)), err.shape)
    return int(i), int(j), float(err[i, j])


def _fd_lag_hess(g: NonlinearMap, x, lam, step):
    n = g.n
    E = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        E[:, j] = (np.asarray(g.jac(x + e)).T @ lam - np.asarray(g.jac(x - e)).T @ lam) / (2 * step)
    return 0.5 * (E + E.T)


def lagrangian_curvature(problem: ParametricProblem, z: PrimalDualPoint, fd_step=1e-5):
    """``E_g = sum_i lam_i * Hess(g_i)(x)`` and its Frobenius norm ``kappa``."""
    g = problem.g
    x = _vec(z.x, "x", problem.n)
    lam = _vec(z.lam, "lam", problem.m)
    if g.lag_hess is not None:
        E = np.asarray(g.lag_hess(x, lam), dtype=float)
    elif g.hess is not None:
        E = np.einsum("i,ijk->jk", lam, np.asarray(g.hess(x), dtype=float))
    elif g.fd_hessian:
        E = _fd_lag_hess(g, x, lam, fd_step)
    else:
        raise CapabilityError(f"no Hessians available for map {g.name or '<anonymous>'}")
    return E, float(np.linalg.norm(E, "fro"))


def slater_check(sub, shrink=1e-6, tol=1e-8) -> bool:
    """Phase-I test for a strictly feasible point of a convex subproblem.

    Minimizes ``t`` subject to ``|A_eq x - b_eq|_inf <= t`` over ``Omega``
    tightened by ``shrink``; satisfied iff the optimal ``t`` is <= ``tol``.
    """
    from .convex import SolverConfig, phase_one

    t, sol = phase_one(sub.A_eq, sub.b_eq, sub.omega.shrink(shrink), SolverConfig(kkt_tolerance=1e-10))
    if sol.status not in ("Optimal",):
        raise SolverError(f"phase-I solve failed with status {sol.status}", status=sol.status, solution=sol)
    return t <= tol
