"""Real-time SCP: one warm-started convex solve per parameter sample."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional

import numpy as np

from .convex import SolverConfig, SubproblemSolution, project_onto_omega
from .errors import InitializationError, StepError, UsageError
from .problem import ParametricProblem, PrimalDualPoint, kkt_residual
from .scp import ScpConfig, convex_step, solve_scp


@dataclass(frozen=True)
class ApproximateScp:
    """Warm-up policy: run this many SCP iterations on the first problem."""

    iterations: int = 10


@dataclass
class RtscpStepRecord:
    k: int
    xi: np.ndarray
    z: PrimalDualPoint
    parameter_drift: float
    solve_iterations: int
    solve_time: float
    original_kkt_residual: float

    def row(self, timing=True):
        return [self.k, repr(self.parameter_drift), self.solve_iterations,
                repr(self.solve_time) if timing else "", repr(self.original_kkt_residual)]


@dataclass
class RtscpState:
    problem: ParametricProblem
    current_z: PrimalDualPoint
    current_xi: np.ndarray
    k: int
    last_solution: SubproblemSolution
    last_record: RtscpStepRecord
    config: SolverConfig = field(default_factory=SolverConfig)
    compute_residual: bool = True


def _residual(problem, z, xi, enabled):
    return kkt_residual(problem, z, xi).total if enabled else float("nan")


def initialize(problem: ParametricProblem, xi1, x0, warmup: Optional[ApproximateScp] = None,
               config: Optional[SolverConfig] = None, compute_residual=True) -> RtscpState:
    """Solve ``P_cvx(x0; xi1)`` (after an optional approximate SCP warm-up)."""
    cfg = config or SolverConfig()
    xi1 = np.asarray(xi1, dtype=float).reshape(-1)
    if xi1.shape[0] != problem.p:
        raise UsageError(f"xi1: expected length {problem.p}, got {xi1.shape[0]}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not problem.omega.contains(x0, tol=1e-12):
        x0 = project_onto_omega(problem.omega, x0)
    warm = None
    if warmup is not None and warmup.iterations > 0:
        rep = solve_scp(problem, xi1, x0, ScpConfig(max_outer_iterations=warmup.iterations, subproblem=cfg))
        if rep.iterates:
            x0, warm = rep.iterates[-1].x, rep.last_solution
    t0 = time.perf_counter()
    sol = convex_step(problem, x0, xi1, cfg, warm)
    elapsed = time.perf_counter() - t0
    if not sol.ok:
        raise InitializationError(f"initial subproblem failed: {sol.status}", status=sol.status, solution=sol)
    rec = RtscpStepRecord(1, xi1, sol.z, 0.0, sol.iterations, elapsed,
                          _residual(problem, sol.z, xi1, compute_residual))
    return RtscpState(problem, sol.z, xi1, 1, sol, rec, cfg, compute_residual)


def step(state: RtscpState, xi_next):
    """Linearize at the current primal point, solve for ``xi_next`` and advance ``k``.

    Raises ``StepError`` on solver failure; ``state`` is left untouched.
    """
    problem = state.problem
    xi_next = np.asarray(xi_next, dtype=float).reshape(-1)
    if xi_next.shape[0] != problem.p:
        raise UsageError(f"xi: expected length {problem.p}, got {xi_next.shape[0]}")
    t0 = time.perf_counter()
    sol = convex_step(problem, state.current_z.x, xi_next, state.config, state.last_solution)
    elapsed = time.perf_counter() - t0
    if not sol.ok:
        raise StepError(f"RTSCP step {state.k + 1} failed: {sol.status}", status=sol.status, solution=sol)
    drift = float(np.linalg.norm(problem.M @ (xi_next - state.current_xi)))
    rec = RtscpStepRecord(state.k + 1, xi_next, sol.z, drift, sol.iterations, elapsed,
                          _residual(problem, sol.z, xi_next, state.compute_residual))
    new = replace(state, current_z=sol.z, current_xi=xi_next, k=state.k + 1,
                  last_solution=sol, last_record=rec)
    return new, rec


def run(problem: ParametricProblem, xi_sequence: Iterable, x0, warmup=None, config=None,
        compute_residual=True) -> List[RtscpStepRecord]:
    """Drive RTSCP over a whole parameter sequence; returns one record per sample."""
    seq = [np.asarray(v, dtype=float) for v in xi_sequence]
    if not seq:
        return []
    state = initialize(problem, seq[0], x0, warmup, config, compute_residual)
    records = [state.last_record]
    for xi in seq[1:]:
        state, rec = step(state, xi)
        records.append(rec)
    return records


CSV_HEADER = ["k", "parameter_drift", "solve_iterations", "solve_time_s", "kkt_residual"]


def write_records_csv(records, path, timing=True):
    """One row per sample; ``timing=False`` leaves ``solve_time_s`` blank for reproducible files."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row(timing))


def write_records_jsonl(records, path, timing=True):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({
                "k": r.k, "xi": r.xi.tolist(), "x": r.z.x.tolist(), "lam": r.z.lam.tolist(),
                "parameter_drift": r.parameter_drift, "solve_iterations": r.solve_iterations,
                "solve_time_s": r.solve_time if timing else None, "kkt_residual": r.original_kkt_residual,
            }) + "\n")
