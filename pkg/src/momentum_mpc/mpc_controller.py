"""Receding-horizon momentum controller with a single reactive step.

Every cycle the controller linearizes the momentum dynamics at the latest
feedback, rebuilds the QP over ``N`` stages and applies the first wrench of
the solution. A step is decided by a capture-point test: when the
instantaneous capture point leaves the (inflated) support polygon the right
foot is sent towards it and ``k_impact`` starts counting down to touchdown.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .contact_constraints import FootParams, SupportPolygon, stance_block, support_polygon
from .cost_builder import CostWeights, build_references
from .momentum_model import (
    CONTROL_DIM,
    STATE_DIM,
    ContactGeometry,
    MomentumState,
    WrenchPair,
    discretize,
    equilibrium_wrench,
    linearize,
)
from .qp_solver import QpSolution, QpSolver, SolverSettings, SolveStatus
from .qp_transcription import ChiLayout, transcribe

# impact index used while no step is planned; always beyond any horizon
NO_IMPACT = 10**9


class Phase(str, enum.Enum):
    DOUBLE_SUPPORT = "double_support"
    SINGLE_SUPPORT = "single_support"
    SWING = "swing"
    POST_STEP = "post_step"


@dataclass(frozen=True)
class ControllerConfig:
    dt: float = 0.01
    horizon: int = 25
    mass: float = 30.0
    gravity: float = 9.81
    com_height: float = 0.53
    foot: FootParams = field(default_factory=FootParams)
    weights: CostWeights = field(default_factory=CostWeights.default)
    solver: SolverSettings = field(default_factory=SolverSettings)
    trigger_margin: float = -0.012
    step_duration: float = 0.6
    reach_radius: float = 0.35

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not self.step_duration > 0:
            raise ValueError("step_duration must be positive")
        if not self.reach_radius > 0:
            raise ValueError("reach_radius must be positive")


@dataclass(frozen=True)
class SteppingState:
    phase: Phase
    impact_index: int
    planned_impact_time: float
    swing_target: np.ndarray
    f_prev: np.ndarray
    left_foot_position: np.ndarray
    right_foot_position: np.ndarray

    def __post_init__(self):
        if self.impact_index < 0:
            raise ValueError("impact_index must be non-negative")
        if self.phase is Phase.SWING and self.impact_index < 1:
            raise ValueError("impact_index must be at least 1 during swing")

    @property
    def right_in_contact(self) -> bool:
        return self.phase in (Phase.DOUBLE_SUPPORT, Phase.POST_STEP)

    def active_feet(self) -> list[np.ndarray]:
        feet = [self.left_foot_position]
        if self.right_in_contact:
            feet.append(self.right_foot_position)
        return feet


@dataclass
class ControllerOutput:
    wrench_command: WrenchPair
    predicted_states: np.ndarray
    predicted_controls: np.ndarray
    solve_stats: dict
    triggered: bool = False
    degraded: bool = False


def initial_impact_index(t_impact: float, dt: float) -> int:
    """``ceil(t_impact / dt)``, robust to binary round-off in the ratio."""
    return int(math.ceil(round(t_impact / dt, 9)))


def update_impact_index(current: int, contact_established: bool) -> int:
    """Shift the expected touchdown one stage closer, never below one.

    Once contact is established the index drops to zero.
    """
    if current < 0:
        raise ValueError("impact index must be non-negative")
    if contact_established:
        return 0
    return max(current - 1, 1)


def capture_point(state: MomentumState, com_height: float, gravity: float = 9.81) -> np.ndarray:
    return state.com_position[:2] + state.com_velocity[:2] * math.sqrt(com_height / gravity)


def step_trigger(
    state: MomentumState,
    polygon: SupportPolygon,
    com_height: float,
    margin: float,
    gravity: float = 9.81,
) -> bool:
    """True when the capture point lies outside the polygon grown by ``margin``."""
    cp = capture_point(state, com_height, gravity)
    return polygon.signed_distance(cp) > margin


def plan_step(
    state: MomentumState,
    stance_foot,
    config: ControllerConfig,
) -> tuple[np.ndarray, float]:
    """Place the swing foot on the capture point, within reach of the stance foot."""
    stance = np.asarray(stance_foot, dtype=float)
    cp = capture_point(state, config.com_height, config.gravity)
    offset = cp - stance[:2]
    dist = float(np.linalg.norm(offset))
    if dist > config.reach_radius:
        offset *= config.reach_radius / dist
    target = np.array([stance[0] + offset[0], stance[1] + offset[1], 0.0])
    return target, float(config.step_duration)


def shift_solution(sol: QpSolution, layout: ChiLayout, rows_per_stage: int) -> QpSolution:
    """Drop the first stage of a solution and repeat the last one."""

    def shift(v, width):
        blocks = np.asarray(v).reshape(layout.n_stages, width)
        return np.vstack([blocks[1:], blocks[-1:]]).ravel()

    return replace(
        sol,
        primal=shift(sol.primal, layout.stage_dim),
        dual_eq=shift(sol.dual_eq, layout.state_dim),
        dual_ineq=shift(sol.dual_ineq, rows_per_stage),
    )


def initial_stepping_state(
    config: ControllerConfig,
    left_foot,
    right_foot,
    com_position,
    double_support: bool = False,
) -> SteppingState:
    geometry = ContactGeometry(left_foot, right_foot, config.mass, config.gravity)
    support = "double" if double_support else "left"
    f_eq = equilibrium_wrench(geometry, com_position, support).as_vector()
    return SteppingState(
        phase=Phase.DOUBLE_SUPPORT if double_support else Phase.SINGLE_SUPPORT,
        impact_index=0 if double_support else NO_IMPACT,
        planned_impact_time=math.nan,
        swing_target=np.asarray(right_foot, dtype=float).copy(),
        f_prev=f_eq,
        left_foot_position=np.asarray(left_foot, dtype=float).copy(),
        right_foot_position=np.asarray(right_foot, dtype=float).copy(),
    )


class MpcController:
    """Stateful wrapper that owns the solver and the warm start.

    Confine an instance to one thread.
    """

    def __init__(self, config: ControllerConfig):
        self.config = config
        self.solver = QpSolver(config.solver)
        self.layout = ChiLayout(config.horizon)
        block = stance_block(config.foot)
        self._blocks = (block, block)
        self._rows_per_stage = 2 * block.a.shape[0]
        self._warm: QpSolution | None = None

    def reset(self) -> None:
        self._warm = None
        self.solver = QpSolver(self.config.solver)

    def support_polygon(self, stepping: SteppingState) -> SupportPolygon:
        return support_polygon(stepping.active_feet(), self.config.foot)

    def reference_polygon(self, stepping: SteppingState) -> SupportPolygon:
        """Polygon whose centroid the CoM should reach after the step."""
        feet = [stepping.left_foot_position]
        if stepping.phase is not Phase.SINGLE_SUPPORT:
            feet.append(stepping.right_foot_position)
        return support_polygon(feet, self.config.foot)

    def control_step(
        self,
        feedback: MomentumState,
        measured_wrench: WrenchPair | None,
        stepping: SteppingState,
        contact_established: bool = False,
        warm_start: bool = True,
    ) -> tuple[ControllerOutput, SteppingState]:
        cfg = self.config
        n = cfg.horizon

        # 1. touchdown bookkeeping
        if stepping.phase is Phase.SWING:
            k = update_impact_index(stepping.impact_index, contact_established)
            phase = Phase.POST_STEP if k == 0 else Phase.SWING
            stepping = replace(stepping, impact_index=k, phase=phase)

        # 2. step decision, at most one per single-support phase
        triggered = False
        if stepping.phase is Phase.SINGLE_SUPPORT:
            poly = self.support_polygon(stepping)
            if step_trigger(feedback, poly, cfg.com_height, cfg.trigger_margin, cfg.gravity):
                target, t_impact = plan_step(feedback, stepping.left_foot_position, cfg)
                stepping = replace(
                    stepping,
                    phase=Phase.SWING,
                    impact_index=initial_impact_index(t_impact, cfg.dt),
                    planned_impact_time=t_impact,
                    swing_target=target,
                    right_foot_position=target,
                )
                triggered = True

        # 3-4. model around feedback
        geometry = ContactGeometry(
            stepping.left_foot_position, stepping.right_foot_position, cfg.mass, cfg.gravity
        )
        if measured_wrench is None:
            support = "double" if stepping.right_in_contact else "left"
            measured_wrench = equilibrium_wrench(geometry, feedback.com_position, support)
        model = discretize(linearize(feedback, measured_wrench, geometry), cfg.dt)

        # 5-6. references, costs and QP
        centroid = self.reference_polygon(stepping).centroid
        refs = build_references(feedback, centroid, cfg.com_height, n)
        problem = transcribe(
            model,
            feedback.as_vector(),
            cfg.weights,
            refs,
            stepping.impact_index,
            stepping.f_prev,
            self._blocks,
            cfg.foot,
            n,
        )

        # 7. solve
        warm = None
        if warm_start and self._warm is not None:
            warm = shift_solution(self._warm, self.layout, self._rows_per_stage)
        sol = self.solver.solve(problem, warm)

        stats = {
            "status": sol.status.value,
            "iterations": sol.iterations,
            "solve_time": sol.solve_time,
            "polished": sol.polished,
            "residuals": sol.residuals,
        }
        states = self.layout.states(sol.primal).copy()
        controls = self.layout.controls(sol.primal).copy()

        # 8. apply f(0)
        degraded = sol.status is not SolveStatus.SOLVED
        if sol.status is SolveStatus.PRIMAL_INFEASIBLE:
            command = np.asarray(stepping.f_prev, dtype=float).copy()
            self._warm = None
        else:
            command = controls[0].copy()
            self._warm = sol
        out = ControllerOutput(
            wrench_command=WrenchPair.from_vector(command),
            predicted_states=states,
            predicted_controls=controls,
            solve_stats=stats,
            triggered=triggered,
            degraded=degraded,
        )
        return out, replace(stepping, f_prev=command)


def control_step(
    feedback: MomentumState,
    measured_wrench: WrenchPair | None,
    stepping: SteppingState,
    config: ControllerConfig,
    contact_established: bool = False,
    controller: MpcController | None = None,
) -> tuple[ControllerOutput, SteppingState]:
    """Functional entry point; builds a throwaway controller when none is given."""
    controller = controller or MpcController(config)
    return controller.control_step(feedback, measured_wrench, stepping, contact_established)
