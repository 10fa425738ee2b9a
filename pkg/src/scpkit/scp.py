"""Full-step sequential convex programming at a fixed parameter."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .convex import SolverConfig, SubproblemSolution, build_subproblem, project_onto_omega, solve
from .errors import UsageError
from .problem import ParametricProblem, PrimalDualPoint, kkt_residual

log = logging.getLogger(__name__)

CONVERGED = "Converged"
MAX_ITERATIONS = "MaxIterations"
SUBPROBLEM_FAILURE = "SubproblemFailure"
STALLED = "Stalled"


@dataclass
class ScpConfig:
    stop_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    max_outer_iterations: int = 50
    subproblem: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not (self.stop_tolerance > 0 and self.step_tolerance > 0):
            raise UsageError("SCP tolerances must be positive")
        if self.max_outer_iterations < 1:
            raise UsageError("max_outer_iterations must be >= 1")


@dataclass
class ScpReport:
    iterates: List[PrimalDualPoint] = field(default_factory=list)
    kkt_residuals: List[float] = field(default_factory=list)
    step_norms: List[float] = field(default_factory=list)
    subproblem_iterations: List[int] = field(default_factory=list)
    status: str = MAX_ITERATIONS
    converged_point: Optional[PrimalDualPoint] = None
    start_projected: bool = False
    last_solution: Optional[SubproblemSolution] = None

    @property
    def iterations(self) -> int:
        return len(self.iterates)

    def to_dict(self, include_iterates=False) -> dict:
        out = {
            "status": self.status,
            "iterations": self.iterations,
            "kkt_residuals": list(map(float, self.kkt_residuals)),
            "step_norms": list(map(float, self.step_norms)),
            "subproblem_iterations": list(map(int, self.subproblem_iterations)),
            "start_projected": self.start_projected,
        }
        if self.converged_point is not None:
            out["converged_point"] = {"x": self.converged_point.x.tolist(),
                                      "lam": self.converged_point.lam.tolist()}
        if include_iterates:
            out["iterates"] = [{"x": z.x.tolist(), "lam": z.lam.tolist()} for z in self.iterates]
        return out

    def to_json(self, path, **kw):
        with open(path, "w") as fh:
            json.dump(self.to_dict(**kw), fh, indent=2)

    def to_csv(self, path, ratios=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["iteration", "kkt_residual", "step_norm", "subproblem_iterations"]
            if ratios is not None:
                header.append("ratio")
            w.writerow(header)
            for j in range(self.iterations):
                row = [j + 1, repr(float(self.kkt_residuals[j])), repr(float(self.step_norms[j])),
                       self.subproblem_iterations[j]]
                if ratios is not None:
                    row.append(repr(float(ratios[j])) if j < len(ratios) and ratios[j] is not None else "")
                w.writerow(row)


def convex_step(problem: ParametricProblem, x_lin, xi, config: SolverConfig,
                warm: Optional[SubproblemSolution] = None) -> SubproblemSolution:
    """Solve ``P_cvx(x_lin; xi)``, warm-started from a previous solution if given.

    This is the single code path shared by SCP iterations and RTSCP steps.
    """
    sub = build_subproblem(problem, x_lin, xi)
    if warm is None:
        return solve(sub, config)
    return solve(sub, config, warm_start=warm.z, warm_ineq=warm.inequality_multipliers)


def solve_scp(problem: ParametricProblem, xi, x0, config: Optional[ScpConfig] = None,
              warm: Optional[SubproblemSolution] = None) -> ScpReport:
    """Iterate ``x^{j+1} = argmin P_cvx(x^j; xi)`` with full steps."""
    cfg = config or ScpConfig()
    xi = np.asarray(xi, dtype=float).reshape(-1)
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != problem.n:
        raise UsageError(f"x0: expected length {problem.n}, got {x.shape[0]}")
    report = ScpReport()
    if not problem.omega.contains(x, tol=1e-12):
        x = project_onto_omega(problem.omega, x)
        report.start_projected = True

    prev = warm
    for j in range(cfg.max_outer_iterations):
        sol = convex_step(problem, x, xi, cfg.subproblem, prev)
        report.last_solution = sol
        if not sol.ok:
            log.info("SCP subproblem %d failed: %s", j + 1, sol.status)
            report.status = SUBPROBLEM_FAILURE
            return report
        step = float(np.linalg.norm(sol.x - x))
        res = kkt_residual(problem, sol.z, xi).total
        report.iterates.append(sol.z)
        report.kkt_residuals.append(res)
        report.step_norms.append(step)
        report.subproblem_iterations.append(sol.iterations)
        x, prev = sol.x, sol
        if res <= cfg.stop_tolerance:
            report.status = CONVERGED
            report.converged_point = sol.z
            return report
        if step <= cfg.step_tolerance:
            report.status = STALLED
            return report
    report.status = MAX_ITERATIONS
    return report


def convergence_ratios(report: ScpReport, z_star: PrimalDualPoint, cutoff=1e-12) -> List[float]:
    """``||z^{j+1} - z*|| / ||z^j - z*||`` for every ``j`` with ``||z^j - z*|| > cutoff``."""
    d = [z.distance(z_star) for z in report.iterates]
    return [d[j + 1] / d[j] for j in range(len(d) - 1) if d[j] > cutoff]
