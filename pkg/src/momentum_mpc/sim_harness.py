"""Deterministic closed-loop simulation on the exact reduced dynamics.

The plant integrates the bilinear momentum rate with a fixed-step RK4,
applies the realized (tracked) wrenches and external pushes, and owns the
swing foot: it flies a minimum-jerk path to the planned target and only
produces contact force after touchdown.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .contact_constraints import support_polygon
from .momentum_model import STATE_DIM, MomentumState, WrenchPair, exact_momentum_rate_vec
from .mpc_controller import NO_IMPACT, ControllerConfig, MpcController, Phase, initial_stepping_state

log = logging.getLogger(__name__)


def rk4_step(rate, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = rate(t, y)
    k2 = rate(t + dt / 2, y + dt / 2 * k1)
    k3 = rate(t + dt / 2, y + dt / 2 * k2)
    k4 = rate(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True)
class PushEvent:
    """External force on the robot, in the transverse plane.

    ``angle_deg`` is measured from the lateral axis pointing to the robot's
    right (``-y``) towards the front (``+x``). ``shape`` is ``"rect"`` for a
    constant pulse or ``"half_sine"`` for a smooth pulse of the same peak.
    ``offset`` is the lever arm of the application point from the CoM.
    """

    start_time: float
    duration: float = 0.1
    magnitude: float = 100.0
    angle_deg: float = 20.0
    shape: str = "rect"
    offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("push duration must be positive")
        if not self.magnitude >= 0:
            raise ValueError("push magnitude must be non-negative")
        if self.shape not in ("rect", "half_sine"):
            raise ValueError(f"unknown push shape {self.shape!r}")

    @property
    def direction(self) -> np.ndarray:
        a = math.radians(self.angle_deg)
        return np.array([math.sin(a), -math.cos(a), 0.0])

    def force(self, t: float) -> np.ndarray:
        s = (t - self.start_time) / self.duration
        if s < 0 or s >= 1:
            return np.zeros(3)
        scale = 1.0 if self.shape == "rect" else math.sin(math.pi * s)
        return self.magnitude * scale * self.direction

    def impulse(self) -> float:
        if self.shape == "rect":
            return self.magnitude * self.duration
        return self.magnitude * self.duration * 2 / math.pi


def push_wrench(pushes, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Total push force and its moment about the CoM at time ``t``."""
    force = np.zeros(3)
    moment = np.zeros(3)
    for p in pushes:
        f = p.force(t)
        force += f
        moment += np.cross(np.asarray(p.offset, dtype=float), f)
    return force, moment


@dataclass(frozen=True)
class WrenchTrackerModel:
    """First-order lag plus Gaussian noise between commanded and realized wrench."""

    time_constant: float = 0.0
    noise_std: tuple = (0.0,) * 6
    seed: int = 0

    def __post_init__(self):
        if not self.time_constant >= 0:
            raise ValueError("tracker time_constant must be non-negative")

    @property
    def ideal(self) -> bool:
        return self.time_constant == 0 and not np.any(self.noise_std)


@dataclass(frozen=True)
class SwingTrajectory:
    start: np.ndarray
    target: np.ndarray
    start_time: float
    duration: float
    contact_time: float
    apex: float = 0.03

    def position(self, t: float) -> np.ndarray:
        s = min(max((t - self.start_time) / self.duration, 0.0), 1.0)
        blend = 10 * s**3 - 15 * s**4 + 6 * s**5
        p = (1 - blend) * self.start + blend * self.target
        p[2] += self.apex * 16 * s**2 * (1 - s) ** 2
        return p


@dataclass(frozen=True)
class PlantState:
    momentum_state: MomentumState
    left_foot_position: np.ndarray
    right_foot_position: np.ndarray
    contact_flags: tuple[bool, bool]
    time: float
    realized: np.ndarray = field(default_factory=lambda: np.zeros(12))
    swing: SwingTrajectory | None = None

    def __post_init__(self):
        for flag, pos in zip(self.contact_flags, (self.left_foot_position, self.right_foot_position)):
            if flag and abs(pos[2]) > 1e-12:
                raise ValueError("a foot in contact must be on the ground")


class Plant:
    """Mutable plant wrapper: tracker noise generator and the current state."""

    def __init__(self, state: PlantState, mass: float, gravity: float,
                 tracker: WrenchTrackerModel | None = None):
        self.state = state
        self.mass = mass
        self.gravity = gravity
        self.tracker = tracker or WrenchTrackerModel()
        self._rng = np.random.default_rng(self.tracker.seed)

    def start_swing(self, target, duration: float, timing_error: float = 0.0,
                    apex: float = 0.03) -> None:
        st = self.state
        swing = SwingTrajectory(
            start=st.right_foot_position.copy(),
            target=np.asarray(target, dtype=float).copy(),
            start_time=st.time,
            duration=duration,
            contact_time=st.time + duration + timing_error,
            apex=apex,
        )
        self.state = replace(st, swing=swing, contact_flags=(st.contact_flags[0], False))

    def track(self, commanded: np.ndarray, dt: float) -> np.ndarray:
        tr = self.tracker
        prev = self.state.realized
        if tr.time_constant > 0:
            out = prev + (1.0 - math.exp(-dt / tr.time_constant)) * (commanded - prev)
        else:
            out = commanded.copy()
        std = np.broadcast_to(np.asarray(tr.noise_std, dtype=float), (6,))
        if np.any(std):
            out = out + np.tile(std, 2) * self._rng.standard_normal(12)
        return out

    def step(self, commanded, pushes, dt: float) -> PlantState:
        if isinstance(commanded, WrenchPair):
            commanded = commanded.as_vector()
        self.state = plant_step(self.state, np.asarray(commanded, dtype=float), pushes, dt,
                                self.mass, self.gravity, tracker=self.track)
        return self.state


def momentum_rate_with_push(gamma, wrench, left, right, mass, gravity, push_force, push_moment):
    rate = exact_momentum_rate_vec(gamma, wrench, left, right, mass, gravity)
    rate[3:6] += push_force / mass
    rate[6:9] += push_moment
    return rate


def plant_step(
    state: PlantState,
    commanded: np.ndarray,
    pushes,
    dt: float,
    mass: float = 30.0,
    gravity: float = 9.81,
    tracker=None,
) -> PlantState:
    """Advance the plant by ``dt`` with the wrench held over the interval.

    A foot that is not in contact produces no wrench whatever the command.
    Pushes are sampled at the RK4 stage times.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    commanded = np.asarray(commanded, dtype=float)
    realized = tracker(commanded, dt) if tracker is not None else commanded.copy()
    left_c, right_c = state.contact_flags
    if not left_c:
        realized[:6] = 0.0
    if not right_c:
        realized[6:] = 0.0
    left = state.left_foot_position
    right = state.right_foot_position

    def rate(t, gamma):
        pf, pm = push_wrench(pushes, t)
        return momentum_rate_with_push(gamma, realized, left, right, mass, gravity, pf, pm)

    gamma = rk4_step(rate, state.time, state.momentum_state.as_vector(), dt)
    t_next = state.time + dt

    swing = state.swing
    right_pos = right
    if swing is not None and not right_c:
        if t_next >= swing.contact_time - 1e-9:
            right_pos = swing.target.copy()
            right_pos[2] = 0.0
            right_c = True
            swing = None
        else:
            right_pos = swing.position(t_next)
            if t_next >= swing.start_time + swing.duration:
                right_pos[2] = max(right_pos[2], 1e-3)
    return PlantState(
        momentum_state=MomentumState.from_vector(gamma),
        left_foot_position=left,
        right_foot_position=right_pos,
        contact_flags=(left_c, right_c),
        time=t_next,
        realized=realized,
        swing=swing,
    )


@dataclass
class RunLog:
    """Per-tick record of a closed-loop run.

    ``k_impact`` is -1 while no step is planned.
    """

    time: np.ndarray
    gamma: np.ndarray
    commanded: np.ndarray
    realized: np.ndarray
    k_impact: np.ndarray
    trigger: np.ndarray
    solve_ms: np.ndarray
    solve_iters: np.ndarray
    phase: list
    right_foot: np.ndarray
    left_foot: np.ndarray
    right_contact: np.ndarray
    status: list
    mass: float
    gravity: float
    foot_half_length: float
    foot_half_width: float
    fell: bool = False
    solver_failed: bool = False
    diagnostic: str = ""

    def __len__(self) -> int:
        return len(self.time)

    @property
    def step_taken(self) -> bool:
        return bool(np.any(self.trigger))

    @property
    def trigger_time(self) -> float:
        idx = np.flatnonzero(self.trigger)
        return float(self.time[idx[0]]) if idx.size else math.nan

    @property
    def landing_time(self) -> float:
        """First time the stepping foot was in contact after a trigger."""
        if not self.step_taken:
            return math.nan
        after = np.flatnonzero(self.right_contact & (self.time > self.trigger_time))
        return float(self.time[after[0]]) if after.size else math.nan

    def final_centroid(self) -> np.ndarray:
        from .contact_constraints import FootParams

        params = FootParams(foot_half_length=self.foot_half_length, foot_half_width=self.foot_half_width)
        feet = [self.left_foot[-1]]
        if self.right_contact[-1]:
            feet.append(self.right_foot[-1])
        return support_polygon(feet, params).centroid

    def max_transverse_excursion(self) -> float:
        d = self.gamma[:, :2] - self.gamma[0, :2]
        return float(np.max(np.linalg.norm(d, axis=1)))

    def settle_time(self, radius: float = 0.02) -> float:
        """Earliest time after which the CoM stays within ``radius`` of the final centroid."""
        dist = np.linalg.norm(self.gamma[:, :2] - self.final_centroid(), axis=1)
        outside = np.flatnonzero(dist > radius)
        if outside.size == 0:
            return float(self.time[0])
        if outside[-1] == len(dist) - 1:
            return math.nan
        return float(self.time[outside[-1] + 1])

    def summary(self) -> dict:
        return {
            "ticks": len(self),
            "fell": self.fell,
            "solver_failed": self.solver_failed,
            "diagnostic": self.diagnostic,
            "step_taken": self.step_taken,
            "trigger_time": _nan_to_none(self.trigger_time),
            "landing_time": _nan_to_none(self.landing_time),
            "settle_time": _nan_to_none(self.settle_time()),
            "max_transverse_excursion": self.max_transverse_excursion(),
            "final_com": self.gamma[-1, :3].tolist(),
            "final_centroid": self.final_centroid().tolist(),
        }


def _nan_to_none(v: float):
    return None if v is None or math.isnan(v) else v


class FallDetected(RuntimeError):
    pass


def run_scenario(config, controller: MpcController | None = None, record_timing: bool = True) -> RunLog:
    """Simulate a :class:`~momentum_mpc.config.ScenarioConfig` in closed loop.

    The run stops early when the CoM drops below the fall threshold or when
    the solver reports infeasibility too many times in a row; both cases
    are flagged on the returned log.
    """
    robot, sim = config.robot, config.simulation
    ctrl_cfg: ControllerConfig = config.controller_config()
    controller = controller or MpcController(ctrl_cfg)
    dt = ctrl_cfg.dt

    left = np.asarray(robot.left_foot_position, dtype=float)
    right = np.asarray(robot.right_foot_position, dtype=float)
    double = robot.initial_support == "double"
    com0 = np.asarray(robot.initial_com(), dtype=float)
    stepping = initial_stepping_state(ctrl_cfg, left, right, com0, double_support=double)
    plant = Plant(
        PlantState(
            momentum_state=MomentumState.at_rest(com0),
            left_foot_position=left,
            right_foot_position=right,
            contact_flags=(True, double),
            time=0.0,
            realized=stepping.f_prev.copy(),
        ),
        ctrl_cfg.mass,
        ctrl_cfg.gravity,
        sim.tracker_model(),
    )
    pushes = sim.push_events()

    n_ticks = int(round(sim.duration / dt))
    rows = {k: [] for k in ("time", "gamma", "cmd", "real", "k", "trig", "ms", "it",
                            "phase", "rfoot", "lfoot", "rc", "status")}
    fell = solver_failed = False
    diagnostic = ""
    failures = 0
    measured = None
    for tick in range(n_ticks):
        st = plant.state
        t = tick * dt
        feedback = st.momentum_state
        contact = st.contact_flags[1] and stepping.phase is Phase.SWING
        out, stepping = controller.control_step(feedback, measured, stepping, contact_established=contact)
        if out.triggered:
            plant.start_swing(stepping.swing_target, ctrl_cfg.step_duration, sim.impact_timing_error)
        if out.solve_stats["status"] == "primal_infeasible":
            failures += 1
        else:
            failures = 0
        command = out.wrench_command.as_vector()
        plant.state = replace(plant.state, time=t)
        new = plant.step(command, pushes, dt)
        measured = WrenchPair.from_vector(new.realized)

        rows["time"].append(t)
        rows["gamma"].append(feedback.as_vector())
        rows["cmd"].append(command)
        rows["real"].append(new.realized.copy())
        rows["k"].append(-1 if stepping.impact_index >= NO_IMPACT else stepping.impact_index)
        rows["trig"].append(out.triggered)
        rows["ms"].append(out.solve_stats["solve_time"] * 1e3 if record_timing else math.nan)
        rows["it"].append(out.solve_stats["iterations"])
        rows["phase"].append(stepping.phase.value)
        rows["rfoot"].append(st.right_foot_position.copy())
        rows["lfoot"].append(st.left_foot_position.copy())
        rows["rc"].append(st.contact_flags[1])
        rows["status"].append(out.solve_stats["status"])

        z = new.momentum_state.com_position[2]
        if z < sim.fall_threshold:
            fell = True
            diagnostic = f"fall: CoM height {z:.3f} m below {sim.fall_threshold} m at t={t + dt:.2f} s"
            log.warning(diagnostic)
            break
        if failures > sim.max_failed_solves:
            solver_failed = True
            diagnostic = f"solver reported infeasibility {failures} times in a row at t={t:.2f} s"
            log.warning(diagnostic)
            break

    return RunLog(
        time=np.array(rows["time"]),
        gamma=np.array(rows["gamma"]).reshape(-1, STATE_DIM),
        commanded=np.array(rows["cmd"]).reshape(-1, 12),
        realized=np.array(rows["real"]).reshape(-1, 12),
        k_impact=np.array(rows["k"], dtype=int),
        trigger=np.array(rows["trig"], dtype=bool),
        solve_ms=np.array(rows["ms"], dtype=float),
        solve_iters=np.array(rows["it"], dtype=int),
        phase=rows["phase"],
        right_foot=np.array(rows["rfoot"]).reshape(-1, 3),
        left_foot=np.array(rows["lfoot"]).reshape(-1, 3),
        right_contact=np.array(rows["rc"], dtype=bool),
        status=rows["status"],
        mass=ctrl_cfg.mass,
        gravity=ctrl_cfg.gravity,
        foot_half_length=ctrl_cfg.foot.foot_half_length,
        foot_half_width=ctrl_cfg.foot.foot_half_width,
        fell=fell,
        solver_failed=solver_failed,
        diagnostic=diagnostic,
    )
