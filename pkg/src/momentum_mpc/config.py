"""Scenario configuration: YAML in, validated frozen dataclasses out.

A scenario file has four optional top-level sections, ``robot``,
``controller``, ``simulation`` and ``output``. Every field has a default, so
an empty file is a valid scenario (single support on the left foot, no
push). Unknown keys are rejected, and errors name the offending field and
its line.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .contact_constraints import FootParams
from .cost_builder import CostWeights
from .mpc_controller import ControllerConfig
from .qp_solver import SolverSettings
from .sim_harness import PushEvent, WrenchTrackerModel

BUNDLED_SCENARIOS = (
    "side_push_20deg",
    "back_push_neg20deg",
    "front_push_45deg",
    "sub_threshold_push",
    "no_push_regulation",
)


class ConfigError(ValueError):
    def __init__(self, field_name: str, reason: str, line: int | None = None):
        self.field = field_name
        self.reason = reason
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field_name}{where}: {reason}")


def _default_weights() -> dict:
    w = CostWeights.default()
    return {k: getattr(w, k).tolist() for k in ("k_gamma", "k_gamma_imp", "k_f", "k_df")}


@dataclass(frozen=True)
class FootConfig:
    friction_coefficient: float = 0.5
    torsional_friction_coefficient: float = 0.01
    half_length: float = 0.06
    half_width: float = 0.04
    max_normal_force: float | None = None
    pyramid_facets: int = 4


@dataclass(frozen=True)
class RobotConfig:
    mass: float = 30.0
    gravity: float = 9.81
    com_height: float = 0.53
    # transverse CoM start; defaults to above the left foot (or between the feet)
    com_xy: list | None = None
    left_foot_position: list = field(default_factory=lambda: [0.0, 0.08, 0.0])
    right_foot_position: list = field(default_factory=lambda: [0.0, -0.08, 0.05])
    initial_support: str = "left"
    foot: FootConfig = field(default_factory=FootConfig)

    def initial_com(self) -> list:
        if self.com_xy is not None:
            xy = list(self.com_xy)
        elif self.initial_support == "double":
            xy = [(a + b) / 2 for a, b in zip(self.left_foot_position[:2], self.right_foot_position[:2])]
        else:
            xy = list(self.left_foot_position[:2])
        return [float(xy[0]), float(xy[1]), float(self.com_height)]


@dataclass(frozen=True)
class SolverConfig:
    abs_tolerance: float = 1e-6
    rel_tolerance: float = 1e-6
    max_iterations: int = 4000
    rho: float = 0.1
    rho_min: float = 1e-6
    rho_max: float = 1e6
    scaling_iterations: int = 10
    polish: bool = True


@dataclass(frozen=True)
class ControllerSection:
    dt: float = 0.01
    horizon: int = 25
    weights: dict = field(default_factory=_default_weights)
    solver: SolverConfig = field(default_factory=SolverConfig)
    trigger_margin: float = -0.012
    step_duration: float = 0.6
    reach_radius: float = 0.35


@dataclass(frozen=True)
class PushConfig:
    start_time: float = 0.5
    duration: float = 0.1
    magnitude: float = 100.0
    angle_deg: float = 20.0
    shape: str = "rect"
    offset: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass(frozen=True)
class TrackerConfig:
    time_constant: float = 0.0
    noise_std: list = field(default_factory=lambda: [0.0] * 6)


@dataclass(frozen=True)
class SimulationConfig:
    duration: float = 5.0
    seed: int = 0
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    pushes: list = field(default_factory=list)
    fall_threshold: float = 0.3
    impact_timing_error: float = 0.0
    max_failed_solves: int = 10

    def tracker_model(self) -> WrenchTrackerModel:
        return WrenchTrackerModel(
            time_constant=self.tracker.time_constant,
            noise_std=tuple(self.tracker.noise_std),
            seed=self.seed,
        )

    def push_events(self) -> list[PushEvent]:
        return [
            PushEvent(p.start_time, p.duration, p.magnitude, p.angle_deg, p.shape, tuple(p.offset))
            for p in self.pushes
        ]


@dataclass(frozen=True)
class PlotConfig:
    com_xy: bool = True
    com_z: bool = True
    forces_z: bool = True
    trigger_timeline: bool = True


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs"
    plots: PlotConfig = field(default_factory=PlotConfig)
    # wall-clock solve times make CSVs non-reproducible; off by default
    log_timing: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    robot: RobotConfig = field(default_factory=RobotConfig)
    controller: ControllerSection = field(default_factory=ControllerSection)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def foot_params(self) -> FootParams:
        f = self.robot.foot
        fmax = f.max_normal_force
        if fmax is None:
            fmax = 2 * self.robot.mass * self.robot.gravity
        return FootParams(
            friction_coefficient=f.friction_coefficient,
            torsional_friction_coefficient=f.torsional_friction_coefficient,
            foot_half_length=f.half_length,
            foot_half_width=f.half_width,
            max_normal_force=fmax,
            pyramid_facets=f.pyramid_facets,
        )

    def controller_config(self) -> ControllerConfig:
        c = self.controller
        s = c.solver
        return ControllerConfig(
            dt=c.dt,
            horizon=c.horizon,
            mass=self.robot.mass,
            gravity=self.robot.gravity,
            com_height=self.robot.com_height,
            foot=self.foot_params(),
            weights=CostWeights(**c.weights),
            solver=SolverSettings(
                abs_tolerance=s.abs_tolerance,
                rel_tolerance=s.rel_tolerance,
                max_iterations=s.max_iterations,
                rho=s.rho,
                rho_min=s.rho_min,
                rho_max=s.rho_max,
                scaling_iterations=s.scaling_iterations,
                polish=s.polish,
            ),
            trigger_margin=c.trigger_margin,
            step_duration=c.step_duration,
            reach_radius=c.reach_radius,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ScenarioConfig":
        """Override dotted fields, e.g. ``replace(**{"controller.dt": 0.005})``."""
        data = self.to_dict()
        for dotted, value in changes.items():
            node = data
            keys = dotted.split(".")
            for k in keys[:-1]:
                node = node[k]
            node[keys[-1]] = value
        return from_dict(data)


# -- parsing -----------------------------------------------------------------

_NESTED = {
    (ScenarioConfig, "robot"): RobotConfig,
    (ScenarioConfig, "controller"): ControllerSection,
    (ScenarioConfig, "simulation"): SimulationConfig,
    (ScenarioConfig, "output"): OutputConfig,
    (RobotConfig, "foot"): FootConfig,
    (ControllerSection, "solver"): SolverConfig,
    (SimulationConfig, "tracker"): TrackerConfig,
    (OutputConfig, "plots"): PlotConfig,
}


def _line_map(node, path=(), out=None) -> dict:
    """Map dotted key paths to 1-based source lines from a YAML node tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            p = path + (str(key.value),)
            out[".".join(p)] = key.start_mark.line + 1
            _line_map(value, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            p = path + (str(i),)
            out[".".join(p)] = item.start_mark.line + 1
            _line_map(item, p, out)
    return out


def _build(cls, data, path: str, lines: dict):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected a mapping", lines.get(path))
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigError(dotted, "unknown key", lines.get(dotted))
        sub = _NESTED.get((cls, key))
        if sub is not None:
            kwargs[key] = _build(sub, value, dotted, lines)
        elif cls is SimulationConfig and key == "pushes":
            if not isinstance(value, list):
                raise ConfigError(dotted, "expected a list of pushes", lines.get(dotted))
            kwargs[key] = [_build(PushConfig, v, f"{dotted}.{i}", lines) for i, v in enumerate(value)]
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _check(cond: bool, field_name: str, reason: str, lines: dict) -> None:
    if not cond:
        raise ConfigError(field_name, reason, lines.get(field_name))


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _vector(v, n: int) -> bool:
    return isinstance(v, (list, tuple)) and len(v) == n and all(_is_num(x) for x in v)


def validate(cfg: ScenarioConfig, lines: dict | None = None) -> None:
    lines = lines or {}
    r, c, s, o = cfg.robot, cfg.controller, cfg.simulation, cfg.output
    _check(_is_num(r.mass) and r.mass > 0, "robot.mass", "must be a positive number", lines)
    _check(_is_num(r.gravity) and r.gravity > 0, "robot.gravity", "must be a positive number", lines)
    _check(_is_num(r.com_height) and r.com_height > 0, "robot.com_height", "must be a positive number", lines)
    _check(r.com_xy is None or _vector(r.com_xy, 2), "robot.com_xy", "must be a list of 2 numbers", lines)
    for name in ("left_foot_position", "right_foot_position"):
        _check(_vector(getattr(r, name), 3), f"robot.{name}", "must be a list of 3 numbers", lines)
    _check(r.left_foot_position[2] == 0, "robot.left_foot_position", "stance foot must be on the ground (z = 0)", lines)
    _check(r.initial_support in ("left", "double"), "robot.initial_support", "must be 'left' or 'double'", lines)
    if r.initial_support == "double":
        _check(r.right_foot_position[2] == 0, "robot.right_foot_position", "must be on the ground for double support", lines)
    f = r.foot
    _check(_is_num(f.friction_coefficient) and f.friction_coefficient > 0, "robot.foot.friction_coefficient", "must be positive", lines)
    _check(_is_num(f.torsional_friction_coefficient) and f.torsional_friction_coefficient >= 0,
           "robot.foot.torsional_friction_coefficient", "must be non-negative", lines)
    _check(_is_num(f.half_length) and f.half_length > 0, "robot.foot.half_length", "must be positive", lines)
    _check(_is_num(f.half_width) and f.half_width > 0, "robot.foot.half_width", "must be positive", lines)
    _check(f.max_normal_force is None or (_is_num(f.max_normal_force) and f.max_normal_force > 0),
           "robot.foot.max_normal_force", "must be positive", lines)
    _check(isinstance(f.pyramid_facets, int) and f.pyramid_facets >= 4 and f.pyramid_facets % 2 == 0,
           "robot.foot.pyramid_facets", "must be an even integer >= 4", lines)

    _check(_is_num(c.dt) and c.dt > 0, "controller.dt", "must be a positive number", lines)
    _check(isinstance(c.horizon, int) and not isinstance(c.horizon, bool) and c.horizon >= 1,
           "controller.horizon", "must be an integer >= 1", lines)
    _check(_is_num(c.trigger_margin), "controller.trigger_margin", "must be a number", lines)
    _check(_is_num(c.step_duration) and c.step_duration > 0, "controller.step_duration", "must be positive", lines)
    _check(_is_num(c.reach_radius) and c.reach_radius > 0, "controller.reach_radius", "must be positive", lines)
    _check(isinstance(c.weights, dict), "controller.weights", "must be a mapping", lines)
    for key in c.weights:
        _check(key in ("k_gamma", "k_gamma_imp", "k_f", "k_df"), f"controller.weights.{key}", "unknown key", lines)
    merged = {**_default_weights(), **c.weights}
    try:
        CostWeights(**merged)
    except ValueError as exc:
        raise ConfigError("controller.weights", str(exc), lines.get("controller.weights")) from None
    sv = c.solver
    for name in ("abs_tolerance", "rel_tolerance", "rho", "rho_min", "rho_max"):
        v = getattr(sv, name)
        _check(_is_num(v) and v > 0, f"controller.solver.{name}", "must be positive", lines)
    _check(isinstance(sv.max_iterations, int) and sv.max_iterations >= 1,
           "controller.solver.max_iterations", "must be an integer >= 1", lines)
    _check(sv.rho_min <= sv.rho <= sv.rho_max, "controller.solver.rho", "must lie in [rho_min, rho_max]", lines)

    _check(_is_num(s.duration) and s.duration > 0, "simulation.duration", "must be positive", lines)
    _check(isinstance(s.seed, int) and not isinstance(s.seed, bool), "simulation.seed", "must be an integer", lines)
    _check(_is_num(s.fall_threshold), "simulation.fall_threshold", "must be a number", lines)
    _check(_is_num(s.impact_timing_error), "simulation.impact_timing_error", "must be a number", lines)
    _check(_is_num(s.tracker.time_constant) and s.tracker.time_constant >= 0,
           "simulation.tracker.time_constant", "must be non-negative", lines)
    _check(_vector(s.tracker.noise_std, 6) and all(x >= 0 for x in s.tracker.noise_std),
           "simulation.tracker.noise_std", "must be a list of 6 non-negative numbers", lines)
    for i, p in enumerate(s.pushes):
        base = f"simulation.pushes.{i}"
        _check(_is_num(p.start_time) and p.start_time >= 0, f"{base}.start_time", "must be non-negative", lines)
        _check(_is_num(p.duration) and p.duration > 0, f"{base}.duration", "must be positive", lines)
        _check(_is_num(p.magnitude) and p.magnitude >= 0, f"{base}.magnitude", "must be non-negative", lines)
        _check(_is_num(p.angle_deg), f"{base}.angle_deg", "must be a number", lines)
        _check(p.shape in ("rect", "half_sine"), f"{base}.shape", "must be 'rect' or 'half_sine'", lines)
        _check(_vector(p.offset, 3), f"{base}.offset", "must be a list of 3 numbers", lines)
    _check(isinstance(o.directory, str) and o.directory != "", "output.directory", "must be a non-empty string", lines)


def from_dict(data: dict, lines: dict | None = None) -> ScenarioConfig:
    lines = lines or {}
    cfg = _build(ScenarioConfig, data, "", lines)
    if isinstance(cfg.controller.weights, dict):
        cfg = dataclasses.replace(
            cfg, controller=dataclasses.replace(cfg.controller, weights={**_default_weights(), **cfg.controller.weights})
        )
    validate(cfg, lines)
    return cfg


def loads(text: str, name: str = "scenario") -> ScenarioConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<file>", f"invalid YAML: {exc}", mark.line + 1 if mark else None) from None
    lines = _line_map(node) if node is not None else {}
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping at top level", 1)
    data.setdefault("name", name)
    return from_dict(data, lines)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("momentum_mpc") / "scenarios" / f"{name}.yaml"))


def load_config(path) -> ScenarioConfig:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED_SCENARIOS:
        p = bundled_path(str(path))
    if not p.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return loads(p.read_text(), name=p.stem)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(_plain(cfg.to_dict()), sort_keys=False, default_flow_style=None)


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
