"""Tracking diagnostics: RTSCP iterates against exact KKT references.

For a parameter trajectory xi_1..xi_K the RTSCP pass produces z^k. At each
sample a reference KKT point zbar^k = zbar(xi_k) is computed by SCP hinted at
z^k, and the records

    dist_before = ||z^k - zbar^k||,  dist_after = ||z^{k+1} - zbar^{k+1}||,
    drift = ||M (xi_{k+1} - xi_k)||

are fitted to the bound ``dist_after <= omega * dist_before + c * drift``.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize, nnls

from .convex import SolverConfig, SubproblemSolution, _Inequalities
from .errors import OracleError, ScpError, UsageError
from .problem import (
    ParametricProblem,
    PrimalDualPoint,
    evaluate,
    kkt_residual,
    lagrangian_curvature,
)
from .rtscp import ApproximateScp, initialize, step
from .scp import ScpConfig, solve_scp

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-6


@dataclass
class ContractionRecord:
    k: int
    dist_before: float
    dist_after: float
    drift: float
    kappa_at_reference: float

    @property
    def ratio(self) -> float:
        return self.dist_after / self.dist_before if self.dist_before > 0 else float("nan")


@dataclass
class ContractionFit:
    """Fitted bound. ``omega_hat, c_hat`` come from the envelope fit: the least-squares
    fit among nonnegative pairs for which the bound (plus the violation tolerance)
    holds at every record. The plain nonnegative least-squares pair is kept
    alongside for comparison."""

    omega_hat: float
    c_hat: float
    violations: int
    record_count: int
    nnls_omega: float = float("nan")
    nnls_c: float = float("nan")
    nnls_violations: int = 0
    max_drift: float = 0.0


@dataclass
class ContractionReport:
    records: List[ContractionRecord]
    fit: Optional[ContractionFit]
    references: List[PrimalDualPoint] = field(default_factory=list)
    iterates: List[PrimalDualPoint] = field(default_factory=list)
    aborted_at: Optional[int] = None
    error: str = ""

    @property
    def complete(self) -> bool:
        return self.aborted_at is None


# -- reference oracle ---------------------------------------------------------

def _active_newton(problem, xi, z: PrimalDualPoint, sol: SubproblemSolution, tol, max_steps=12):
    """Newton on the active-set KKT equations of the original problem.

    Uses the exact Lagrangian Hessian, so it converges quadratically where
    full-step SCP (which drops that term) only converges linearly.
    """
    ineq = _Inequalities(problem.omega)
    zi, s = sol.inequality_multipliers, sol.slacks
    if len(zi) != ineq.count:
        return None
    active = np.flatnonzero(s < zi)
    n, m, k = problem.n, problem.m, len(active)
    x, lam, zA = z.x.copy(), z.lam.copy(), zi[active].copy()
    H = problem.H if problem.H is not None else np.zeros((n, n))
    best, best_res = None, np.inf
    for _ in range(max_steps):
        gx, J = evaluate(problem, x)
        JA = ineq.jac(x)[active]
        F = np.concatenate([
            problem.c + H @ x + J.T @ lam + JA.T @ zA,
            gx + problem.M @ xi,
            ineq.f(x)[active],
        ])
        zfull = np.zeros(ineq.count)
        zfull[active] = zA
        if np.all(zA >= 0):
            cand = PrimalDualPoint(x.copy(), lam.copy())
            res = kkt_residual(problem, cand, xi).total
            if res < best_res:
                best, best_res = cand, res
            if res <= tol:
                break
        E, _ = lagrangian_curvature(problem, PrimalDualPoint(x, lam))
        K = np.zeros((n + m + k, n + m + k))
        K[:n, :n] = H + E + ineq.curvature(zfull)
        K[:n, n:n + m] = J.T
        K[:n, n + m:] = JA.T
        K[n:n + m, :n] = J
        K[n + m:, :n] = JA
        d = np.linalg.lstsq(K, -F, rcond=None)[0]
        x, lam, zA = x + d[:n], lam + d[n:n + m], zA + d[n + m:]
    return best, best_res


def reference_kkt(problem: ParametricProblem, xi, hint, tol=1e-12, scp_iterations=15,
                  hint_lam=None) -> PrimalDualPoint:
    """Locally unique KKT point of P(xi) near ``hint``, certified to residual ``tol``.

    SCP runs from the hint; if it has not reached ``tol`` after
    ``scp_iterations`` outer steps, an exact-Hessian Newton refinement on the
    identified active set finishes the job. Raises ``OracleError`` otherwise.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    hint = np.asarray(hint, dtype=float).reshape(-1)
    cfg = ScpConfig(stop_tolerance=tol, step_tolerance=1e-16, max_outer_iterations=scp_iterations,
                    subproblem=SolverConfig(kkt_tolerance=min(1e-10, tol * 0.1)))
    try:
        rep = solve_scp(problem, xi, hint, cfg)
    except ScpError as exc:
        raise OracleError(f"reference SCP raised: {exc}") from exc
    if rep.converged_point is not None:
        return rep.converged_point
    if not rep.iterates or rep.last_solution is None or not rep.last_solution.ok:
        raise OracleError(f"reference SCP failed with status {rep.status}")
    out = _active_newton(problem, xi, rep.iterates[-1], rep.last_solution, tol)
    if out is None or out[0] is None or out[1] > tol:
        last = out[1] if out else float("nan")
        raise OracleError(f"reference solve did not reach {tol:g} (best residual {last:.3e})")
    return out[0]


def kappa_profile(problem: ParametricProblem, z_list: Sequence[PrimalDualPoint]) -> List[float]:
    return [lagrangian_curvature(problem, z)[1] for z in z_list]


# -- fitting ------------------------------------------------------------------

def _count_violations(records, w, c):
    return int(sum(r.dist_after > w * r.dist_before + c * r.drift + VIOLATION_TOL for r in records))


def _envelope_fit(a, b, y, slack=0.5 * VIOLATION_TOL):
    """min ||w a + c b - y||^2  s.t.  w a + c b >= y - slack,  w, c >= 0.

    A slack below the violation tolerance keeps roundoff-level records from
    dictating the bound while leaving a margin against the violation test. A feasible start comes from an LP; SLSQP then
    solves the two-variable QP.
    """
    A = np.column_stack([a, b])
    lo = y - slack
    lp = linprog(A.sum(axis=0) + 1e-12, A_ub=-A, b_ub=-lo, bounds=[(0, None), (0, None)],
                 method="highs")
    if lp.status != 0:
        return None
    scale = max(float(np.max(np.abs(y))), 1e-300)
    An, yn, lon = A / scale, y / scale, lo / scale
    res = minimize(
        lambda v: float(np.sum((An @ v - yn) ** 2)), lp.x,
        jac=lambda v: 2.0 * An.T @ (An @ v - yn),
        constraints=[{"type": "ineq", "fun": lambda v: An @ v - lon, "jac": lambda v: An}],
        bounds=[(0, None), (0, None)], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500},
    )
    cand = np.maximum(res.x, 0.0)
    # keep the LP point if SLSQP drifted outside the feasible region
    if np.any(A @ cand < lo - 1e-12):
        return lp.x
    return cand


def fit_contraction(records: Sequence[ContractionRecord]) -> ContractionFit:
    if not records:
        return ContractionFit(float("nan"), float("nan"), 0, 0)
    a = np.array([r.dist_before for r in records])
    b = np.array([r.drift for r in records])
    y = np.array([r.dist_after for r in records])
    sol = nnls(np.column_stack([a, b]), y)[0] if np.any(a) or np.any(b) else np.zeros(2)
    env = _envelope_fit(a, b, y)
    if env is None:
        env = np.array([np.inf, np.inf])
    return ContractionFit(
        omega_hat=float(env[0]), c_hat=float(env[1]),
        violations=_count_violations(records, env[0], env[1]),
        record_count=len(records),
        nnls_omega=float(sol[0]), nnls_c=float(sol[1]),
        nnls_violations=_count_violations(records, sol[0], sol[1]),
        max_drift=float(b.max()),
    )


# -- trajectory ---------------------------------------------------------------

def contraction_trace(problem: ParametricProblem, xi_sequence, x0, warmup: Optional[ApproximateScp] = None,
                      config: Optional[SolverConfig] = None, jobs: int = 1,
                      oracle_tol: float = 1e-12) -> ContractionReport:
    """RTSCP along ``xi_sequence`` plus a hinted reference at every sample.

    Failures do not raise; the report carries ``aborted_at`` (the sample index
    k, 1-based) and records up to that point.
    """
    seq = [np.asarray(v, dtype=float).reshape(-1) for v in xi_sequence]
    if len(seq) < 2:
        raise UsageError("contraction trace needs at least 2 parameter samples")

    iterates: List[PrimalDualPoint] = []
    aborted, error = None, ""
    try:
        state = initialize(problem, seq[0], x0, warmup, config, compute_residual=False)
        iterates.append(state.current_z)
        for k, xi in enumerate(seq[1:], start=2):
            state, rec = step(state, xi)
            iterates.append(rec.z)
    except ScpError as exc:
        aborted, error = len(iterates) + 1, f"RTSCP: {exc}"

    # references at distinct k are independent; identical xi share a reference
    def ref(k):
        return reference_kkt(problem, seq[k], iterates[k].x, tol=oracle_tol)

    refs: List[Optional[PrimalDualPoint]] = [None] * len(iterates)
    unique = [k for k in range(len(iterates)) if k == 0 or not np.array_equal(seq[k], seq[k - 1])]
    results = {}
    if jobs > 1 and len(unique) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {k: pool.submit(ref, k) for k in unique}
            for k in unique:
                try:
                    results[k] = futs[k].result()
                except OracleError as exc:
                    results[k] = exc
    else:
        for k in unique:
            try:
                results[k] = ref(k)
            except OracleError as exc:
                results[k] = exc
                break
    for k in range(len(iterates)):
        r = results.get(k) if k in unique else refs[k - 1]
        if r is None or isinstance(r, OracleError):
            if aborted is None or k + 1 < aborted:
                aborted, error = k + 1, f"oracle at k={k + 1}: {r}"
            break
        refs[k] = r
    refs_ok = [r for r in refs if r is not None]

    kap = kappa_profile(problem, refs_ok)
    records = []
    for k in range(len(refs_ok) - 1):
        records.append(ContractionRecord(
            k=k + 1,
            dist_before=iterates[k].distance(refs_ok[k]),
            dist_after=iterates[k + 1].distance(refs_ok[k + 1]),
            drift=float(np.linalg.norm(problem.M @ (seq[k + 1] - seq[k]))),
            kappa_at_reference=kap[k],
        ))
    fit = fit_contraction(records) if records else None
    return ContractionReport(records, fit, refs_ok, iterates, aborted, error)


# -- output -------------------------------------------------------------------

RECORD_HEADER = ["k", "dist_before", "dist_after", "drift", "kappa_at_reference", "ratio", "bound"]


def write_records_csv(report: ContractionReport, path):
    fit = report.fit
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_HEADER)
        for r in report.records:
            bound = (fit.omega_hat * r.dist_before + fit.c_hat * r.drift) if fit else float("nan")
            w.writerow([r.k, repr(r.dist_before), repr(r.dist_after), repr(r.drift),
                        repr(r.kappa_at_reference), repr(r.ratio), repr(bound)])


def fit_summary(report: ContractionReport) -> dict:
    out = {
        "complete": report.complete,
        "aborted_at": report.aborted_at,
        "error": report.error,
        "fit": asdict(report.fit) if report.fit else None,
    }
    if report.records:
        kap = [r.kappa_at_reference for r in report.records]
        out["kappa_min"], out["kappa_max"] = float(min(kap)), float(max(kap))
    return out


def write_fit_json(report: ContractionReport, path, extra=None):
    data = fit_summary(report)
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
