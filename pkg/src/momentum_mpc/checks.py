"""Numerical self-checks on a scenario's first control cycle.

Nothing is simulated. Each check returns ``(name, passed, detail)``; the
``check`` CLI subcommand prints them one per line.
"""

from __future__ import annotations

import numpy as np

from .config import ScenarioConfig
from .contact_constraints import stance_block
from .cost_builder import build_references, clamp_impact_stage, evaluate_cost_direct
from .momentum_model import (
    ContactGeometry,
    MomentumState,
    discretize,
    equilibrium_wrench,
    exact_momentum_rate,
    linearize,
)
from .mpc_controller import MpcController, initial_impact_index, initial_stepping_state
from .qp_solver import QpSolver, SolveStatus, kkt_residuals
from .qp_transcription import ChiLayout, transcribe


def run_checks(cfg: ScenarioConfig, seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    ctrl = cfg.controller_config()
    robot = cfg.robot
    com0 = np.asarray(robot.initial_com(), dtype=float)
    double = robot.initial_support == "double"
    state = MomentumState.at_rest(com0)
    geometry = ContactGeometry(robot.left_foot_position, robot.right_foot_position, ctrl.mass, ctrl.gravity)
    f_eq = equilibrium_wrench(geometry, com0, "double" if double else "left")
    results = []

    # affine model agrees with the exact rate at the expansion point
    model_c = linearize(state, f_eq, geometry)
    err = float(np.max(np.abs(model_c.rate(state.as_vector(), f_eq.as_vector())
                              - exact_momentum_rate(state, f_eq, geometry))))
    results.append(("model_expansion_point", err < 1e-9, f"max |affine - exact| = {err:.2e}"))

    # the initial equilibrium wrench satisfies the contact constraints
    block = stance_block(ctrl.foot)
    ok = block.is_feasible(f_eq.left.as_vector(), 1e-9)
    if double:
        ok = ok and block.is_feasible(f_eq.right.as_vector(), 1e-9)
    results.append(("equilibrium_wrench_feasible", bool(ok), "stance constraints hold at start"))

    # transcription reproduces the stage-wise cost and the forward rollout
    n = ctrl.horizon
    layout = ChiLayout(n)
    model = discretize(model_c, ctrl.dt)
    refs = build_references(state, com0[:2], ctrl.com_height, n)
    # a step landing inside the horizon exercises both state weight regimes
    k_imp = 0 if double else min(initial_impact_index(ctrl.step_duration, ctrl.dt), n) // 2 + 1
    problem = transcribe(model, state.as_vector(), ctrl.weights, refs, k_imp, f_eq.as_vector(),
                         (block, block), ctrl.foot, n)
    controls = f_eq.as_vector() + rng.normal(scale=5.0, size=(n, 12))
    states = model.rollout(state.as_vector(), controls)
    chi = layout.pack(states, controls)
    direct = evaluate_cost_direct(states, controls, refs, ctrl.weights, clamp_impact_stage(k_imp, n),
                                  f_eq.as_vector())
    quad = problem.objective(chi)
    rel = abs(quad - direct) / max(1.0, abs(direct))
    results.append(("cost_identity", rel < 1e-9, f"relative gap {rel:.2e}"))
    eq_res = float(np.max(np.abs(problem.eq_matrix @ chi - problem.eq_rhs)))
    results.append(("rollout_satisfies_dynamics", eq_res < 1e-9, f"max residual {eq_res:.2e}"))

    # the first QP is solved and certified
    sol = QpSolver(ctrl.solver).solve(problem)
    stat, prim, comp = kkt_residuals(problem, sol)
    results.append((
        "first_qp_solved",
        sol.status is SolveStatus.SOLVED,
        f"status {sol.status.value}, {sol.iterations} iterations, kkt ({stat:.1e}, {prim:.1e}, {comp:.1e})",
    ))

    # one full controller cycle runs and returns a finite command
    controller = MpcController(ctrl)
    stepping = initial_stepping_state(ctrl, robot.left_foot_position, robot.right_foot_position, com0,
                                      double_support=double)
    out, _ = controller.control_step(state, None, stepping)
    finite = bool(np.all(np.isfinite(out.wrench_command.as_vector())))
    results.append(("control_cycle", finite and not out.degraded,
                    f"status {out.solve_stats['status']}, fz = {out.wrench_command.left.force[2]:.2f} N"))
    return results
