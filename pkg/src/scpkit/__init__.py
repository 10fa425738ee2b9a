"""Sequential convex programming and its real-time variant for parametric problems

    min c'x  s.t.  g(x) + M xi = 0,  x in Omega,

with an embedded primal-dual interior-point subproblem solver, tracking
diagnostics and a hovercraft MPC benchmark.
"""
from .convex import ConvexSubproblem, SolverConfig, SubproblemSolution, build_subproblem, project_onto_omega, solve
from .errors import (
    CapabilityError,
    EvaluationError,
    InitializationError,
    OracleError,
    ScpError,
    SolverError,
    StepError,
    UsageError,
)
from .problem import (
    ConvexSet,
    KKTResidual,
    NonlinearMap,
    ParametricProblem,
    PrimalDualPoint,
    QuadConstraint,
    check_jacobian,
    evaluate,
    kkt_residual,
    lagrangian_curvature,
    slater_check,
)
from .rtscp import ApproximateScp, RtscpState, RtscpStepRecord
from .scp import ScpConfig, ScpReport, convergence_ratios, solve_scp

__version__ = "0.1.0"
