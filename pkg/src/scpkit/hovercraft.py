"""Underactuated hovercraft: model, Euler-discretized OCP and closed-loop MPC.

State ``(y1, y2, theta, dy1, dy2, dtheta)``, control ``(u1, u2)`` fan thrusts.
The decision vector of the OCP is ``(s, xi_0, ..., xi_N, u_0, ..., u_{N-1})``
in slack-epigraph mode and the same without ``s`` in direct-quadratic mode.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .convex import SolverConfig
from .errors import SolverError, UsageError
from .problem import ConvexSet, NonlinearMap, ParametricProblem, QuadConstraint
from .rtscp import ApproximateScp, RtscpStepRecord, initialize, step

log = logging.getLogger(__name__)

XI0 = np.array([-0.38, 0.30, 0.052, 0.0092, -0.0053, 0.002])
DT = 0.05
HORIZON = 15

SLACK = "slack"
QUADRATIC = "quadratic"


@dataclass(frozen=True)
class HovercraftParams:
    m: float = 0.974
    I: float = 0.0125
    r: float = 0.0485
    u_lo: float = -0.121
    u_hi: float = 0.342
    y1_lo: float = -2.0
    y1_hi: float = 2.0
    y2_lo: float = -2.0
    y2_hi: float = 2.0

    def __post_init__(self):
        if not (self.m > 0 and self.I > 0 and self.r > 0):
            raise UsageError("mass, inertia and lever arm must be positive")
        if not self.u_lo < self.u_hi:
            raise UsageError("u_lo must be < u_hi")
        if not (self.y1_lo < self.y1_hi and self.y2_lo < self.y2_hi):
            raise UsageError("position lower bounds must be < upper bounds")


@dataclass(frozen=True)
class OcpWeights:
    """Diagonals of the stage (Q, R) and terminal (S) weight matrices."""

    Q: tuple = (5.0, 10.0, 0.1, 1.0, 1.0, 0.01)
    R: tuple = (0.01, 0.01)
    S: tuple = (5.0, 15.0, 0.05, 1.0, 1.0, 0.01)

    def __post_init__(self):
        for name, n in (("Q", 6), ("R", 2), ("S", 6)):
            v = tuple(float(a) for a in getattr(self, name))
            if len(v) != n:
                raise UsageError(f"weights {name}: expected {n} entries, got {len(v)}")
            if min(v) < 0:
                raise UsageError(f"weights {name} must be nonnegative")
            object.__setattr__(self, name, v)


def dynamics(state, u, params: HovercraftParams = HovercraftParams()):
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    return kernels.hover_rhs(state, u, params.m, params.I, params.r)


def euler_step(state, u, params: HovercraftParams = HovercraftParams(), dt=DT):
    if not dt > 0:
        raise UsageError("dt must be positive")
    state = np.asarray(state, dtype=float)
    return state + dt * dynamics(state, u, params)


def rk4_step(state, u, params: HovercraftParams = HovercraftParams(), dt=DT, substeps=10):
    if not dt > 0:
        raise UsageError("dt must be positive")
    return kernels.hover_rk4(np.asarray(state, dtype=float), np.asarray(u, dtype=float),
                             dt, substeps, params.m, params.I, params.r)


@dataclass(frozen=True)
class OcpLayout:
    N: int
    slack: bool

    @property
    def offset(self) -> int:
        return 1 if self.slack else 0

    @property
    def n(self) -> int:
        return self.offset + 6 * (self.N + 1) + 2 * self.N

    @property
    def m(self) -> int:
        return 6 * (self.N + 1)

    def states(self, x):
        o = self.offset
        return np.asarray(x)[o:o + 6 * (self.N + 1)].reshape(self.N + 1, 6)

    def controls(self, x):
        o = self.offset + 6 * (self.N + 1)
        return np.asarray(x)[o:o + 2 * self.N].reshape(self.N, 2)

    def pack(self, states, controls, s=None):
        parts = [np.asarray(states, float).ravel(), np.asarray(controls, float).ravel()]
        if self.slack:
            parts.insert(0, np.array([0.0 if s is None else s]))
        return np.concatenate(parts)


def _cost_matrix(weights: OcpWeights, layout: OcpLayout):
    """``P`` with ``x'Px / 2`` equal to the OCP stage + terminal cost."""
    o = layout.offset
    N = layout.N
    d = np.zeros(layout.n)
    d[o:o + 6 * N] = np.tile(weights.Q, N)
    d[o + 6 * N:o + 6 * (N + 1)] = weights.S
    d[o + 6 * (N + 1):] = np.tile(weights.R, N)
    return np.diag(2.0 * d)


def dynamics_map(params: HovercraftParams, N: int, dt: float, slack: bool) -> NonlinearMap:
    layout = OcpLayout(N, slack)
    off = layout.offset
    args = (off, N, float(dt), params.m, params.I, params.r)
    return NonlinearMap(
        n=layout.n, m=layout.m,
        fun=lambda x: kernels.hover_g(np.asarray(x, dtype=float), *args),
        jac=lambda x: kernels.hover_jac(np.asarray(x, dtype=float), *args),
        lag_hess=lambda x, lam: kernels.hover_lag_hess(np.asarray(x, dtype=float),
                                                       np.asarray(lam, dtype=float), *args),
        name="hovercraft_ocp",
    )


def build_ocp(params: HovercraftParams = HovercraftParams(), weights: OcpWeights = OcpWeights(),
              N: int = HORIZON, dt: float = DT, mode: str = SLACK) -> ParametricProblem:
    """Assemble the MPC problem in ``min c'x s.t. g(x) + M xi = 0, x in Omega`` form.

    The measured state enters through ``M = [-I6; 0]`` on the initial-state rows.
    """
    if int(N) != N or N < 1:
        raise UsageError(f"N must be a positive integer, got {N}")
    if not dt > 0:
        raise UsageError(f"dt must be positive, got {dt}")
    if mode not in (SLACK, QUADRATIC):
        raise UsageError(f"mode must be '{SLACK}' or '{QUADRATIC}', got {mode!r}")
    N = int(N)
    layout = OcpLayout(N, mode == SLACK)
    n, o = layout.n, layout.offset
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    pos = o + 6 * np.arange(N + 1)
    lo[pos], hi[pos] = params.y1_lo, params.y1_hi
    lo[pos + 1], hi[pos + 1] = params.y2_lo, params.y2_hi
    uo = o + 6 * (N + 1)
    lo[uo:], hi[uo:] = params.u_lo, params.u_hi
    M = np.zeros((layout.m, 6))
    M[:6, :6] = -np.eye(6)
    P = _cost_matrix(weights, layout)
    g = dynamics_map(params, N, dt, layout.slack)
    if layout.slack:
        q = np.zeros(n)
        q[0] = -1.0
        omega = ConvexSet(lo, hi, quad=[QuadConstraint(P, q, 0.0)])
        c = np.zeros(n)
        c[0] = 1.0
        return ParametricProblem(c=c, g=g, M=M, omega=omega, name="hovercraft_ocp[slack]")
    return ParametricProblem(c=np.zeros(n), g=g, M=M, omega=ConvexSet(lo, hi), H=P,
                             name="hovercraft_ocp[quadratic]")


def initial_guess(layout: OcpLayout, state) -> np.ndarray:
    """Parked-at-measurement trajectory with zero thrust (a point of Omega)."""
    states = np.tile(np.asarray(state, dtype=float), (layout.N + 1, 1))
    return layout.pack(states, np.zeros((layout.N, 2)), s=0.0)


def ocp_objective(weights: OcpWeights, layout: OcpLayout, x) -> float:
    P = _cost_matrix(weights, layout)
    return 0.5 * float(x @ P @ x)


SIM_COLUMNS = ["t", "y1", "y2", "theta", "dy1", "dy2", "dtheta", "u1", "u2",
               "solve_iters", "solve_time_s", "kkt_residual"]


@dataclass
class SimTrace:
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    controls: List[np.ndarray] = field(default_factory=list)
    step_records: List[Optional[RtscpStepRecord]] = field(default_factory=list)
    failed_samples: List[int] = field(default_factory=list)
    stop_time: Optional[float] = None
    aborted: bool = False
    config: dict = field(default_factory=dict)

    def xi_sequence(self):
        """Measured states that were fed to the controller."""
        return [r.xi for r in self.step_records if r is not None]

    def write_csv(self, path, timing=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SIM_COLUMNS)
            for i, t in enumerate(self.times):
                st = self.states[i]
                if i < len(self.controls):
                    u = self.controls[i]
                    rec = self.step_records[i]
                    iters = rec.solve_iterations if rec else ""
                    st_time = (repr(rec.solve_time) if timing else "") if rec else ""
                    res = repr(rec.original_kkt_residual) if rec else ""
                    tail = [repr(float(u[0])), repr(float(u[1])), iters, st_time, res]
                else:
                    tail = ["", "", "", "", ""]
                w.writerow([repr(float(t))] + [repr(float(v)) for v in st] + tail)

    def summary(self) -> dict:
        norms = [float(np.hypot(s[0], s[1])) for s in self.states]
        return {
            "stop_time": self.stop_time,
            "reached": self.stop_time is not None,
            "aborted": self.aborted,
            "samples": len(self.controls),
            "failed_samples": self.failed_samples,
            "initial_position_norm": norms[0] if norms else None,
            "final_position_norm": norms[-1] if norms else None,
            "config": self.config,
        }

    def write_summary(self, path, extra=None):
        data = self.summary()
        if extra:
            data.update(extra)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)


def simulate_closed_loop(params: HovercraftParams = HovercraftParams(),
                         weights: OcpWeights = OcpWeights(), N: int = HORIZON, dt: float = DT,
                         x_init=XI0, horizon_s: float = 15.0, stop_radius: float = 0.01,
                         mode: str = SLACK, plant: str = "rk4", plant_substeps: int = 10,
                         warmup: Optional[ApproximateScp] = ApproximateScp(10),
                         solver: Optional[SolverConfig] = None, run_to_horizon: bool = False,
                         max_failures: int = 3) -> SimTrace:
    """Closed-loop RTSCP MPC of the hovercraft.

    At each sample the plant state is measured and used as the parameter of
    one RTSCP step; the first control of the solution is held for ``dt``.
    On a failed step the previous control is reapplied; ``max_failures``
    consecutive failures abort the run.
    """
    if not horizon_s > 0:
        raise UsageError("horizon_s must be positive")
    if plant not in ("rk4", "euler"):
        raise UsageError(f"plant must be 'rk4' or 'euler', got {plant!r}")
    problem = build_ocp(params, weights, N, dt, mode)
    layout = OcpLayout(int(N), mode == SLACK)
    x_state = np.asarray(x_init, dtype=float).reshape(6).copy()
    trace = SimTrace(config={
        "params": asdict(params), "weights": asdict(weights), "N": int(N), "dt": dt,
        "x_init": x_state.tolist(), "horizon_s": horizon_s, "stop_radius": stop_radius,
        "mode": mode, "plant": plant, "plant_substeps": plant_substeps,
        "warmup_iterations": warmup.iterations if warmup else 0,
    })
    n_samples = int(round(horizon_s / dt))
    state = None
    u_prev = np.zeros(2)
    fails = 0
    for k in range(n_samples + 1):
        t = k * dt
        trace.times.append(t)
        trace.states.append(x_state.copy())
        if trace.stop_time is None and np.hypot(x_state[0], x_state[1]) <= stop_radius:
            trace.stop_time = t
            if not run_to_horizon:
                break
        if k == n_samples:
            break
        rec = None
        try:
            if state is None:
                state = initialize(problem, x_state, initial_guess(layout, x_state), warmup, solver)
                rec = state.last_record
            else:
                state, rec = step(state, x_state)
            u = layout.controls(rec.z.x)[0].copy()
            fails = 0
        except SolverError as exc:
            log.warning("sample %d: %s; holding previous control", k, exc)
            trace.failed_samples.append(k)
            fails += 1
            u = u_prev
            if fails >= max_failures:
                trace.aborted = True
                trace.controls.append(u.copy())
                trace.step_records.append(None)
                break
        trace.controls.append(u.copy())
        trace.step_records.append(rec)
        u_prev = u
        if plant == "rk4":
            x_state = rk4_step(x_state, u, params, dt, plant_substeps)
        else:
            x_state = euler_step(x_state, u, params, dt)
    return trace
