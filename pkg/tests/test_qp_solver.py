import numpy as np
import pytest
import scipy.sparse as sp

from momentum_mpc import MpcController, QpSolver, SolverSettings, SolveStatus, load_config, run_scenario
from momentum_mpc.qp_solver import QpSolution, kkt_residuals
from momentum_mpc.qp_transcription import QpProblem
from oracles import active_set_qp


def make_problem(h, g, a=None, b=None, a_eq=None, b_eq=None) -> QpProblem:
    h = np.atleast_2d(np.asarray(h, dtype=float))
    n = h.shape[0]
    a = np.zeros((0, n)) if a is None else np.atleast_2d(np.asarray(a, dtype=float))
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    return QpProblem(sp.csc_matrix(h), np.asarray(g, dtype=float), sp.csc_matrix(a_eq), b_eq,
                     sp.csc_matrix(a), b)


def random_qp(rng):
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 9))
    r = rng.normal(size=(n, n))
    h = r @ r.T + 0.1 * np.eye(n)
    g = rng.normal(size=n) * 3
    a = rng.normal(size=(m, n))
    # a known interior point keeps every instance feasible
    x0 = rng.normal(size=n)
    b = a @ x0 + rng.uniform(0.0, 1.0, m)
    return h, g, a, b


def test_single_active_bound():
    # min (x - 1)^2 = 1/2 (2) x^2 - 2 x + 1
    sol = QpSolver().solve(make_problem([[2.0]], [-2.0], [[1.0]], [0.5]))
    assert sol.status is SolveStatus.SOLVED
    assert sol.primal[0] == pytest.approx(0.5, abs=1e-6)
    assert sol.dual_ineq[0] == pytest.approx(1.0, abs=1e-6)


def test_unconstrained():
    rng = np.random.default_rng(0)
    r = rng.normal(size=(5, 5))
    h = r @ r.T + np.eye(5)
    g = rng.normal(size=5)
    sol = QpSolver().solve(make_problem(h, g))
    assert sol.solved
    assert np.allclose(sol.primal, np.linalg.solve(h, -g), atol=1e-6)


def test_equality_constrained():
    # min |x|^2 / 2 s.t. x1 + x2 = 1
    sol = QpSolver().solve(make_problem(np.eye(2), [0, 0], a_eq=[[1, 1]], b_eq=[1]))
    assert sol.solved
    assert np.allclose(sol.primal, [0.5, 0.5], atol=1e-6)
    assert sol.dual_eq[0] == pytest.approx(-0.5, abs=1e-6)


def test_matches_active_set_enumeration():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        h, g, a, b = random_qp(rng)
        prob = make_problem(h, g, a, b)
        sol = QpSolver().solve(prob)
        assert sol.status is SolveStatus.SOLVED
        x_ref, _ = active_set_qp(h, g, a, b)
        worst = max(worst, float(np.max(np.abs(sol.primal - x_ref))))
        assert max(kkt_residuals(prob, sol)) <= 1e-6
    assert worst <= 1e-5


def test_primal_infeasible():
    prob = make_problem([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    sol = QpSolver().solve(prob)
    assert sol.status is SolveStatus.PRIMAL_INFEASIBLE


def test_iteration_cap_flagged():
    rng = np.random.default_rng(3)
    h, g, a, b = random_qp(rng)
    while a.shape[0] < 3:
        h, g, a, b = random_qp(rng)
    settings = SolverSettings(max_iterations=1, polish=False)
    sol = QpSolver(settings).solve(make_problem(h, g, a, b))
    assert sol.status in (SolveStatus.MAX_ITERATIONS, SolveStatus.SOLVED)
    assert sol.iterations == 1


def test_kkt_residuals_zero_problem():
    prob = make_problem(np.zeros((2, 2)), np.zeros(2))
    sol = QpSolution(np.zeros(2), np.zeros(0), np.zeros(0), 0.0, SolveStatus.SOLVED, 0)
    assert kkt_residuals(prob, sol) == (0.0, 0.0, 0.0)


def test_stationarity_grows_with_primal_perturbation():
    rng = np.random.default_rng(4)
    h, g, a, b = random_qp(rng)
    prob = make_problem(h, g, a, b)
    sol = QpSolver().solve(prob)
    base = kkt_residuals(prob, sol)[0]
    for delta in (1e-3, 1e-2):
        d = rng.normal(size=h.shape[0])
        d *= delta / np.max(np.abs(d))
        moved = QpSolution(sol.primal + d, sol.dual_eq, sol.dual_ineq, 0.0, sol.status, 0)
        grow = kkt_residuals(prob, moved)[0] - base
        expected = np.max(np.abs(h @ d))
        assert 0.5 * expected <= grow + 1e-9 <= 1.5 * expected + 1e-9


def test_bitwise_determinism():
    rng = np.random.default_rng(5)
    h, g, a, b = random_qp(rng)
    prob = make_problem(h, g, a, b)
    s1, s2 = QpSolver().solve(prob), QpSolver().solve(prob)
    assert np.array_equal(s1.primal, s2.primal)
    assert np.array_equal(s1.dual_ineq, s2.dual_ineq)
    assert s1.iterations == s2.iterations


def test_cost_scaling_invariance():
    rng = np.random.default_rng(6)
    for _ in range(20):
        h, g, a, b = random_qp(rng)
        x1 = QpSolver().solve(make_problem(h, g, a, b)).primal
        x2 = QpSolver().solve(make_problem(37.0 * h, 37.0 * g, a, b)).primal
        assert np.allclose(x1, x2, atol=1e-5)


def test_solved_status_certified_on_mpc_problem():
    cfg = load_config("side_push_20deg")
    ctrl = MpcController(cfg.controller_config())
    seen = []
    orig = ctrl.solver.solve

    def solve(problem, warm=None):
        sol = orig(problem, warm)
        seen.append((sol.status, ctrl.solver.certified(problem, sol)))
        return sol

    ctrl.solver.solve = solve
    run_scenario(cfg.replace(**{"simulation.duration": 1.2}), controller=ctrl)
    assert seen and all(status is SolveStatus.SOLVED and ok for status, ok in seen)


def test_warm_start_not_slower_than_cold():
    cfg = load_config("side_push_20deg").replace(**{"simulation.duration": 2.0})
    ctrl = MpcController(cfg.controller_config())
    counts = []
    orig = ctrl.solver.solve

    def solve(problem, warm=None):
        sol = orig(problem, warm)
        cold = QpSolver(ctrl.solver.settings).solve(problem)
        counts.append((sol.iterations, cold.iterations))
        return sol

    ctrl.solver.solve = solve
    run_scenario(cfg, controller=ctrl)
    warm, cold = np.array(counts).T
    assert np.mean(warm <= cold) >= 0.8
