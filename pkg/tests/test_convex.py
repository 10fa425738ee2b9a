import csv

import numpy as np
import pytest

from oracles import active_set_qp, random_qp
from scpkit import hovercraft as hv
from scpkit.convex import (
    INFEASIBLE,
    OPTIMAL,
    ConvexSubproblem,
    SolverConfig,
    build_subproblem,
    certificate,
    project_onto_omega,
    solve,
)
from scpkit.errors import UsageError
from scpkit.problem import ConvexSet, NonlinearMap, ParametricProblem, PrimalDualPoint, QuadConstraint, kkt_residual


def box_qp(H, c, A, b, lo, hi):
    return ConvexSubproblem(np.zeros(len(c)), np.atleast_2d(A).reshape(-1, len(c)), np.asarray(b, float),
                            np.asarray(c, float), ConvexSet.box(lo, hi), H)


# -- build_subproblem -----------------------------------------------------------

def test_linear_map_linearization_is_exact():
    A = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]])
    b = np.array([0.5, 1.0])
    M = np.array([[1.0], [2.0]])
    prob = ParametricProblem(np.zeros(3), NonlinearMap.linear(A, b), M, ConvexSet.free(3))
    xi = np.array([0.3])
    for x_lin in (np.zeros(3), np.array([1.0, -2.0, 5.0])):
        sub = build_subproblem(prob, x_lin, xi)
        assert np.allclose(sub.A_eq, A)
        assert np.allclose(sub.b_eq, b - M @ xi)


def test_feasible_linearization_point_is_feasible_for_subproblem():
    prob = hv.build_ocp()
    x = np.zeros(prob.n)
    sub = build_subproblem(prob, x, np.zeros(6))
    assert np.allclose(sub.b_eq, sub.A_eq @ x)


def test_hovercraft_initial_state_rows():
    prob = hv.build_ocp()
    sub = build_subproblem(prob, np.zeros(prob.n), hv.XI0)
    # g carries +xi_0 and M = [-I; 0], so the rows read xi_0 = measured state
    assert np.array_equal(sub.b_eq[:6], hv.XI0)
    assert not sub.b_eq[6:].any()


def test_subproblem_recomputable_bit_equal():
    prob = hv.build_ocp()
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.2, 0.2, prob.n)
    a = build_subproblem(prob, x, hv.XI0)
    b = build_subproblem(prob, x.copy(), hv.XI0.copy())
    assert np.array_equal(a.A_eq, b.A_eq) and np.array_equal(a.b_eq, b.b_eq)
    assert np.array_equal(a.b_eq, a.A_eq @ x - prob.g.fun(x) - prob.M @ hv.XI0)


def test_build_subproblem_rejects_bad_parameter():
    with pytest.raises(UsageError):
        build_subproblem(hv.build_ocp(), np.zeros(127), np.zeros(5))


# -- solve: examples ----------------------------------------------------------------

def test_lp_vertex():
    sol = solve(box_qp(None, [1.0, 0.0], [[1.0, 1.0]], [1.0], np.zeros(2), np.ones(2)))
    assert sol.status == OPTIMAL
    assert np.allclose(sol.x, [0.0, 1.0], atol=1e-8)


def test_least_norm_multiplier_sign():
    sub = ConvexSubproblem(np.zeros(2), np.array([[1.0, 1.0]]), np.array([2.0]), np.zeros(2),
                           ConvexSet.free(2), np.eye(2))
    sol = solve(sub)
    assert np.allclose(sol.x, [1.0, 1.0], atol=1e-10)
    assert np.allclose(sol.z.lam, [-1.0], atol=1e-10)


@pytest.mark.parametrize("seed", range(40))
def test_random_qp_matches_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    H, c, A, b, lo, hi = random_qp(rng)
    x_ref, f_ref = active_set_qp(H, c, A, b, lo, hi)
    sol = solve(box_qp(H, c, A, b, lo, hi))
    assert sol.ok
    assert np.abs(sol.x - x_ref).max() <= 1e-6
    assert abs(0.5 * sol.x @ H @ sol.x + c @ sol.x - f_ref) <= 1e-5


def test_enumeration_oracle_sanity():
    # unconstrained minimizer strictly inside the box: no bound active
    H = np.diag([2.0, 4.0])
    x, _ = active_set_qp(H, np.array([-1.0, -2.0]), np.zeros((0, 2)), np.zeros(0), -np.ones(2), np.ones(2))
    assert np.allclose(x, [0.5, 0.5])
    # minimizer pushed onto a bound
    x, _ = active_set_qp(H, np.array([-6.0, 0.0]), np.zeros((0, 2)), np.zeros(0), -np.ones(2), np.ones(2))
    assert np.allclose(x, [1.0, 0.0])


# -- solve: properties --------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_warm_start_consistency(seed):
    rng = np.random.default_rng(2000 + seed)
    sub = box_qp(*random_qp(rng))
    cold = solve(sub)
    warm = solve(sub, warm_start=cold.z, warm_ineq=cold.inequality_multipliers)
    assert warm.ok and np.abs(warm.x - cold.x).max() <= 1e-7


def test_warm_start_hovercraft():
    prob = hv.build_ocp()
    sub = build_subproblem(prob, np.zeros(prob.n), hv.XI0)
    cold = solve(sub)
    warm = solve(sub, warm_start=cold.z, warm_ineq=cold.inequality_multipliers)
    assert warm.ok and np.abs(warm.x - cold.x).max() <= 1e-7


@pytest.mark.parametrize("seed", range(15))
def test_certificate_rechecked_by_kkt_residual(seed):
    rng = np.random.default_rng(3000 + seed)
    sub = box_qp(*random_qp(rng))
    sol = solve(sub)
    assert sol.ok and sol.final_residual <= 1e-8
    assert np.all(sol.inequality_multipliers >= -1e-10)
    res = kkt_residual(sub.as_problem(), sol.z, np.zeros(0)).total
    assert res <= 1e-8


def test_certificate_hovercraft_subproblem():
    prob = hv.build_ocp()
    sub = build_subproblem(prob, np.zeros(prob.n), hv.XI0)
    sol = solve(sub)
    assert sol.ok
    assert kkt_residual(sub.as_problem(), sol.z, np.zeros(0)).total <= 1e-8
    assert certificate(sub, sol.x, sol.z.lam, sol.inequality_multipliers) <= 1e-8
    assert sub.omega.violation(sol.x) <= 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_barrier_nonincreasing_after_second_iteration(seed):
    rng = np.random.default_rng(4000 + seed)
    sol = solve(box_qp(*random_qp(rng)))
    h = sol.barrier_history
    assert all(h[i + 1] <= h[i] for i in range(1, len(h) - 1))


def test_barrier_nonincreasing_with_quadratic_rows():
    prob = hv.build_ocp()
    sol = solve(build_subproblem(prob, np.zeros(prob.n), hv.XI0))
    h = sol.barrier_history
    assert len(h) > 2 and all(h[i + 1] <= h[i] for i in range(1, len(h) - 1))


def test_infeasible_subproblem_reported():
    sol = solve(box_qp(None, [1.0, 0.0], [[1.0, 0.0]], [2.0], np.zeros(2), np.ones(2)))
    assert sol.status == INFEASIBLE


def test_max_iterations_status():
    prob = hv.build_ocp()
    sol = solve(build_subproblem(prob, np.zeros(prob.n), hv.XI0), SolverConfig(max_iterations=2))
    assert sol.status == "MaxIterations" and not sol.ok


def test_solver_config_validation():
    with pytest.raises(UsageError):
        SolverConfig(kkt_tolerance=0.0)
    with pytest.raises(UsageError):
        SolverConfig(fraction_to_boundary=1.0)


def test_trace_written(tmp_path):
    path = tmp_path / "trace.csv"
    solve(box_qp(np.eye(2), [1.0, -1.0], np.zeros((0, 2)), [], -np.ones(2), np.ones(2)),
          SolverConfig(trace_path=str(path)))
    rows = list(csv.reader(open(path)))
    assert rows[0][:3] == ["iteration", "dual_res", "primal_res"] and len(rows) > 1


# -- projection -----------------------------------------------------------------------

def test_projection_box_clips():
    om = ConvexSet.box(np.zeros(2), np.ones(2))
    assert np.array_equal(project_onto_omega(om, [2.0, -1.0]), [1.0, 0.0])


def test_projection_idempotent_on_members():
    om = ConvexSet([-1.0, -1.0], [1.0, 1.0], quad=[QuadConstraint(2 * np.eye(2), np.zeros(2), -1.0)])
    y = np.array([0.3, -0.4])
    assert np.allclose(project_onto_omega(om, y), y, atol=1e-8)


def test_projection_unit_disk():
    om = ConvexSet(np.full(2, -np.inf), np.full(2, np.inf), quad=[QuadConstraint(2 * np.eye(2), np.zeros(2), -1.0)])
    assert np.allclose(project_onto_omega(om, [2.0, 0.0]), [1.0, 0.0], atol=1e-8)


def test_projection_is_nearest_point():
    # compare against sampling the boundary of the disk
    om = ConvexSet(np.full(2, -np.inf), np.full(2, np.inf), quad=[QuadConstraint(2 * np.eye(2), np.zeros(2), -1.0)])
    y = np.array([1.3, -2.1])
    p = project_onto_omega(om, y)
    t = np.linspace(0, 2 * np.pi, 20001)
    best = np.min(np.hypot(np.cos(t) - y[0], np.sin(t) - y[1]))
    assert np.linalg.norm(p - y) <= best + 1e-8


def test_solve_rejects_wrong_warm_start():
    sub = box_qp(np.eye(2), [0.0, 0.0], np.zeros((0, 2)), [], -np.ones(2), np.ones(2))
    with pytest.raises(UsageError):
        solve(sub, warm_start=PrimalDualPoint(np.zeros(3), np.zeros(0)))
