"""
One control cycle: transcription, solve and certificate
=======================================================

The horizon is packed into a single vector ``chi`` of alternating states
and wrenches. The dynamics become banded equality rows, the contact rows
repeat per stage, and the cost is a block tridiagonal quadratic. The
solver is an ADMM splitting with a banded factorization; a solution is
reported as solved only after a KKT check on the unscaled problem.
"""

# %%
import time

import numpy as np

from momentum_mpc import (
    ChiLayout,
    ControllerConfig,
    CostWeights,
    MpcController,
    MomentumState,
    QpSolver,
    build_references,
    initial_stepping_state,
    stance_block,
    transcribe,
)
from momentum_mpc.momentum_model import ContactGeometry, discretize, equilibrium_wrench, linearize
from momentum_mpc.qp_solver import kkt_residuals

cfg = ControllerConfig()
left, right = np.array([0.0, 0.08, 0.0]), np.array([0.05, -0.12, 0.0])
com = np.array([0.0, 0.06, cfg.com_height])
state = MomentumState(com, [0.05, -0.25, 0.0], [0.0, 0.0, 0.0])
geom = ContactGeometry(left, right, cfg.mass, cfg.gravity)
f0 = equilibrium_wrench(geom, com, "left")

# A step is planned to land 12 stages ahead.
model = discretize(linearize(state, f0, geom), cfg.dt)
refs = build_references(state, [0.025, -0.02], cfg.com_height, cfg.horizon)
block = stance_block(cfg.foot)
problem = transcribe(model, state.as_vector(), CostWeights.default(), refs, 12, f0.as_vector(),
                     (block, block), cfg.foot, cfg.horizon)
print(f"QP: {problem.n} variables, {problem.eq_matrix.shape[0]} equalities, "
      f"{problem.ineq_matrix.shape[0]} inequalities, hessian nnz {problem.hessian.nnz}")

# %%
solver = QpSolver(cfg.solver)
t0 = time.perf_counter()
sol = solver.solve(problem)
ms = (time.perf_counter() - t0) * 1e3
print(f"status {sol.status.value} after {sol.iterations} iterations in {ms:.1f} ms (cold, includes setup)")
print("KKT residuals (stationarity, primal, complementarity): %.1e %.1e %.1e" % kkt_residuals(problem, sol))

lay = ChiLayout(cfg.horizon)
controls = lay.controls(sol.primal)
print("right-foot normal force per stage [N]:")
print(np.round(controls[:, 8], 3))

# %%
# The controller repeats this every tick; the shifted previous solution warm starts the next one.
ctrl = MpcController(cfg)
stepping = initial_stepping_state(cfg, left, [0.0, -0.08, 0.05], com)
s = state
for tick in range(5):
    out, stepping = ctrl.control_step(s, None, stepping)
    st = out.solve_stats
    print(f"tick {tick}: phase {stepping.phase.value:14s} k_impact {stepping.impact_index:3d} "
          f"iterations {st['iterations']:3d} solve {st['solve_time'] * 1e3:5.2f} ms "
          f"triggered {out.triggered}")
    s = MomentumState.from_vector(out.predicted_states[0])
