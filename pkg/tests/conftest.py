import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from momentum_mpc import MpcController, load_config, run_scenario  # noqa: E402
from momentum_mpc.mpc_controller import Phase  # noqa: E402


class RecordingController(MpcController):
    """Controller that keeps every cycle's phase, plan and wall time."""

    def __init__(self, config):
        super().__init__(config)
        self.cycles = []

    def control_step(self, feedback, measured_wrench, stepping, contact_established=False, warm_start=True):
        t0 = time.perf_counter()
        out, new = super().control_step(feedback, measured_wrench, stepping, contact_established, warm_start)
        elapsed = time.perf_counter() - t0
        self.cycles.append(Cycle(new.phase, new.impact_index, out.predicted_controls, out.solve_stats, elapsed))
        return out, new


@dataclass
class Cycle:
    phase: Phase
    impact_index: int
    controls: np.ndarray
    stats: dict = field(repr=False)
    seconds: float = 0.0


@dataclass
class ScenarioRun:
    config: object
    log: object
    cycles: list
    wall_seconds: float


_RUNS = {}


def closed_loop(name: str, **overrides) -> ScenarioRun:
    """Run a bundled scenario once per session and cache the result."""
    key = (name, repr(sorted(overrides.items())))
    if key not in _RUNS:
        cfg = load_config(name)
        if overrides:
            cfg = cfg.replace(**overrides)
        ctrl = RecordingController(cfg.controller_config())
        t0 = time.perf_counter()
        log = run_scenario(cfg, controller=ctrl)
        _RUNS[key] = ScenarioRun(cfg, log, ctrl.cycles, time.perf_counter() - t0)
    return _RUNS[key]


@pytest.fixture(scope="session")
def run_scenario_cached():
    return closed_loop
