import numpy as np
import pytest

from tubempc.boxes import Box, contains
from tubempc.errors import UsageError
from tubempc.ftocp import (FtocpSolution, build_ftocp, mpc_policy,
                           solve_ftocp, stage_cost)
from tubempc.linearizer import AffineModel


def scalar_model(a=0.0, A=0.5, B=1.0):
    return AffineModel(np.array([a]), np.array([[A]]), np.array([[B]]),
                       Box([0.0], [100.0]), Box([0.0], [0.0]),
                       Box([0.0], [0.0]))


def wide():
    return Box([0.0], [100.0])


def analytic_one_step(a, A, B, Q, R, x0, xf):
    # minimize (x1-xf)^2 Q + u^2 R  s.t.  x1 = a + A x0 + B u
    return -Q * B * (a + A * x0 - xf) / (R + Q * B * B)


def test_one_step_matches_analytic_optimum():
    a, A, B, Q, R, x0, xf = 0.4, 0.8, 1.3, 1.0, 100.0, 2.0, -1.0
    problem = build_ftocp([scalar_model(a, A, B)], [wide()], wide(), wide(),
                          [x0], [[Q]], [[R]], [[Q]], [xf])
    sol = solve_ftocp(problem)
    assert sol.feasible
    u_star = analytic_one_step(a, A, B, Q, R, x0, xf)
    assert abs(sol.u_seq[0][0] - u_star) < 1e-5
    assert abs(mpc_policy(sol)[0] - u_star) < 1e-5


def test_dimension_metadata():
    models = [scalar_model() for _ in range(6)]
    problem = build_ftocp(models, [wide()] * 6, wide(), wide(), [4.0],
                          [[1.0]], [[100.0]], [[1.0]], [-1.0])
    assert problem.state_var_count == 7
    assert problem.input_var_count == 6
    p1 = build_ftocp([scalar_model()], [wide()], wide(), wide(), [0.0],
                     [[1.0]], [[1.0]], [[1.0]], [0.0])
    assert p1.state_var_count == 2 and p1.input_var_count == 1


def test_solution_invariants():
    models = [scalar_model(0.2, 0.7, 1.0) for _ in range(4)]
    stage = Box([0.0], [3.0])
    terminal = Box([0.5], [0.5])
    problem = build_ftocp(models, [stage] * 4, terminal,
                          Box.from_bounds([-2.0], [2.0]), [2.0],
                          [[1.0]], [[5.0]], [[1.0]], [0.5])
    sol = solve_ftocp(problem)
    assert sol.feasible
    assert abs(sol.x_seq[0][0] - 2.0) < 1e-9
    for k, m in enumerate(models):
        pred = m.predict(sol.x_seq[k]) + m.B @ sol.u_seq[k]
        assert np.max(np.abs(sol.x_seq[k + 1] - pred)) < 1e-6
        assert contains(stage, sol.x_seq[k], tol=1e-6)
        assert contains(Box.from_bounds([-2.0], [2.0]), sol.u_seq[k], tol=1e-6)
    assert contains(terminal, sol.x_seq[-1], tol=1e-6)
    assert sol.solver_stats["kkt_residual"] <= 1e-6
    assert sol.solver_stats["max_violation"] <= 1e-6
    assert sol.cost >= 0


def test_empty_box_short_circuits():
    problem = build_ftocp([scalar_model()], [Box.empty(1)], wide(), wide(),
                          [0.0], [[1.0]], [[1.0]], [[1.0]], [0.0])
    assert problem.infeasible_reason is not None
    sol = solve_ftocp(problem)
    assert not sol.feasible


def test_degenerate_terminal_returns_unique_input():
    # radius-0 terminal, reachable: x1 = 0.5 x0 + u = 1.0 from x0 = 1
    problem = build_ftocp([scalar_model(0.0, 0.5, 1.0)], [wide()],
                          Box([1.0], [0.0]), wide(), [1.0],
                          [[1.0]], [[1.0]], [[1.0]], [1.0])
    sol = solve_ftocp(problem)
    assert sol.feasible
    assert abs(sol.u_seq[0][0] - 0.5) < 1e-7
    assert abs(sol.x_seq[1][0] - 1.0) < 1e-9


def test_unreachable_terminal_infeasible():
    # |u| <= 1 cannot reach x1 = 10 from x0 = 0
    problem = build_ftocp([scalar_model(0.0, 0.5, 1.0)], [wide()],
                          Box([10.0], [0.1]), Box.from_bounds([-1.0], [1.0]),
                          [0.0], [[1.0]], [[1.0]], [[1.0]], [0.0])
    sol = solve_ftocp(problem)
    assert not sol.feasible


def test_current_state_outside_stage_box_infeasible():
    problem = build_ftocp([scalar_model()], [Box([5.0], [0.1])], wide(),
                          wide(), [0.0], [[1.0]], [[1.0]], [[1.0]], [0.0])
    assert problem.infeasible_reason is not None
    assert not solve_ftocp(problem).feasible


def test_membership_initial_set():
    # fallback-style start: x0 may deviate from x_t within the box
    init = Box([0.0], [0.5])
    problem = build_ftocp([scalar_model(0.0, 1.0, 1.0)], [wide()],
                          Box([2.0], [0.0]), Box.from_bounds([-1.6], [1.6]),
                          [1.0], [[1.0]], [[1.0]], [[1.0]], [2.0],
                          init_set=init)
    sol = solve_ftocp(problem)
    assert sol.feasible
    # x0 is free in [0.5, 1.5]; reaching 2.0 with cheapest u uses x0 = 1.5
    assert 0.5 - 1e-7 <= sol.x_seq[0][0] <= 1.5 + 1e-7
    assert abs(sol.x_seq[1][0] - 2.0) < 1e-7


def test_cost_zero_at_goal_with_zero_input():
    problem = build_ftocp([scalar_model(0.5, 0.5, 1.0)], [wide()],
                          Box([1.0], [0.5]), wide(), [1.0],
                          [[1.0]], [[1.0]], [[1.0]], [1.0])
    sol = solve_ftocp(problem)
    # x_f = 1 is the equilibrium of 0.5 + 0.5 x, so zero input stays there
    assert sol.feasible and sol.cost < 1e-10
    assert abs(sol.u_seq[0][0]) < 1e-6


def test_repeat_solve_reproducible():
    models = [scalar_model(0.1, 0.6, 1.0) for _ in range(3)]
    problem = build_ftocp(models, [Box([0.0], [4.0])] * 3, Box([0.2], [0.3]),
                          Box.from_bounds([-2.0], [2.0]), [3.0],
                          [[1.0]], [[10.0]], [[2.0]], [0.2])
    a = solve_ftocp(problem)
    b = solve_ftocp(problem)
    assert abs(a.cost - b.cost) <= 1e-8


def test_mpc_policy_rejects_infeasible():
    sol = FtocpSolution(False, [], [], float("inf"), {})
    with pytest.raises(UsageError):
        mpc_policy(sol)


def test_cost_matrix_validation():
    with pytest.raises(UsageError):
        build_ftocp([scalar_model()], [wide()], wide(), wide(), [0.0],
                    [[1.0]], [[0.0]], [[1.0]], [0.0])     # R not PD
    with pytest.raises(UsageError):
        build_ftocp([scalar_model()], [wide()], wide(), wide(), [0.0],
                    [[-1.0]], [[1.0]], [[1.0]], [0.0])    # Q not PSD


def test_stage_box_none_skips_constraint():
    problem = build_ftocp([scalar_model(0.0, 0.0, 1.0)], [None],
                          Box([50.0], [0.1]), Box.from_bounds([-60.0], [60.0]),
                          [0.0], [[1.0]], [[1.0]], [[1.0]], [0.0])
    sol = solve_ftocp(problem)
    assert sol.feasible and abs(sol.x_seq[1][0] - 49.9) < 1e-5


def test_two_dim_problem():
    A = np.array([[0.9, 0.2], [0.0, 0.7]])
    B = np.array([[0.0], [1.0]])
    model = AffineModel(np.zeros(2), A, B, Box(np.zeros(2), np.full(2, 10.0)),
                        Box(np.zeros(2), np.zeros(2)),
                        Box(np.zeros(2), np.zeros(2)))
    problem = build_ftocp([model] * 5, [Box(np.zeros(2), np.full(2, 10.0))] * 5,
                          Box(np.zeros(2), np.full(2, 0.5)),
                          Box.from_bounds([-3.0], [3.0]),
                          [2.0, 1.0], np.eye(2), [[1.0]], np.eye(2),
                          [0.0, 0.0])
    sol = solve_ftocp(problem)
    assert sol.feasible
    assert contains(Box(np.zeros(2), np.full(2, 0.5)), sol.x_seq[-1], tol=1e-6)


def test_stage_cost_helper():
    assert stage_cost([1.0], [0.5], [[2.0]], [[4.0]], [0.0]) == 2.0 + 1.0
    assert stage_cost([0.0], [0.0], [[2.0]], [[4.0]], [0.0]) == 0.0


def test_dump_text_contains_blocks():
    problem = build_ftocp([scalar_model()], [wide()], wide(), wide(), [0.0],
                          [[1.0]], [[1.0]], [[1.0]], [0.0])
    text = problem.dump_text()
    assert "H =" in text and "inequalities" in text and "equalities" in text
