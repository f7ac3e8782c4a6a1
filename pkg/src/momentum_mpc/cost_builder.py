"""Stage weights, references and a direct evaluator of the horizon cost.

The cost over a horizon of ``N`` stages is::

    1/2 sum_{k=1}^{N}        |gamma(k) - gamma_d(k)|^2_{K_gamma}
  + 1/2 sum_{k=kbar}^{N}     |gamma(k) - gamma_d(k)|^2_{K_gamma_imp}
  + 1/2 sum_{k=0}^{N-1}      |f(k)|^2_{K_f}
  + 1/2 sum_{k=0}^{N-1}      |f(k) - f(k-1)|^2_{K_df}

with ``kbar = min(k_impact, N)`` and ``f(-1)`` the previously applied wrench.
Transverse CoM position is only weighted by ``K_gamma_imp``, i.e. after the
expected touchdown and at the terminal stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .momentum_model import CONTROL_DIM, STATE_DIM, MomentumState


def _diag(values, size: int, name: str) -> np.ndarray:
    d = np.asarray(values, dtype=float)
    if d.ndim == 0:
        d = np.full(size, float(d))
    if d.ndim == 2:
        d = np.diag(d)
    if d.shape != (size,):
        raise ValueError(f"{name} must have {size} diagonal entries, got shape {d.shape}")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError(f"{name} must be finite and non-negative")
    d.flags.writeable = False
    return d


@dataclass(frozen=True)
class CostWeights:
    """Diagonals of the four weight matrices."""

    k_gamma: np.ndarray
    k_gamma_imp: np.ndarray
    k_f: np.ndarray
    k_df: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k_gamma", _diag(self.k_gamma, STATE_DIM, "k_gamma"))
        object.__setattr__(self, "k_gamma_imp", _diag(self.k_gamma_imp, STATE_DIM, "k_gamma_imp"))
        object.__setattr__(self, "k_f", _diag(self.k_f, CONTROL_DIM, "k_f"))
        object.__setattr__(self, "k_df", _diag(self.k_df, CONTROL_DIM, "k_df"))
        if np.any(self.k_gamma[:2] != 0):
            raise ValueError("k_gamma must not weight the transverse CoM position")

    @classmethod
    def default(cls) -> "CostWeights":
        wrench = [1e-6] * 3 + [1e-4] * 3
        return cls(
            k_gamma=[0, 0, 1e5, 1e2, 1e2, 1e3, 1, 1, 1],
            k_gamma_imp=[1e4, 1e4, 1e5, 1e2, 1e2, 1e3, 1, 1, 1],
            k_f=wrench * 2,
            k_df=[1e-4] * 3 + [1e-3] * 3 + [1e-4] * 3 + [1e-3] * 3,
        )

    @classmethod
    def zeros(cls) -> "CostWeights":
        return cls(np.zeros(STATE_DIM), np.zeros(STATE_DIM), np.zeros(CONTROL_DIM), np.zeros(CONTROL_DIM))


@dataclass(frozen=True)
class ReferenceTrajectory:
    """State references for stages ``1..N``; row ``k - 1`` is stage ``k``."""

    states: np.ndarray

    @property
    def n_stages(self) -> int:
        return self.states.shape[0]

    def at(self, stage: int) -> np.ndarray:
        return self.states[stage - 1]


def build_references(
    current: MomentumState, post_step_centroid, com_height: float, n_stages: int
) -> ReferenceTrajectory:
    """Constant reference: CoM over the support centroid, at rest, no spin.

    ``current`` is accepted for interface symmetry; the reference does not
    depend on feedback.
    """
    if n_stages < 1:
        raise ValueError("n_stages must be at least 1")
    cx, cy = np.asarray(post_step_centroid, dtype=float)[:2]
    ref = np.zeros(STATE_DIM)
    ref[0:3] = [cx, cy, com_height]
    states = np.tile(ref, (n_stages, 1))
    states.flags.writeable = False
    return ReferenceTrajectory(states)


def clamp_impact_stage(impact_stage: int, n_stages: int) -> int:
    return min(int(impact_stage), int(n_stages))


def stage_cost_weight(
    stage: int, impact_stage_clamped: int, n_stages: int, weights: CostWeights
) -> np.ndarray:
    """Diagonal state weight applied at ``stage`` (1-based)."""
    if stage < 1 or stage > n_stages:
        raise ValueError(f"stage must be in [1, {n_stages}], got {stage}")
    if stage >= impact_stage_clamped or stage == n_stages:
        return weights.k_gamma + weights.k_gamma_imp
    return weights.k_gamma.copy()


def evaluate_cost_direct(
    states,
    controls,
    refs: ReferenceTrajectory,
    weights: CostWeights,
    impact_stage: int,
    f_prev,
) -> float:
    """Sum the four cost terms stage by stage.

    ``states`` holds gamma(1..N) with shape (N, 9); ``controls`` holds
    f(0..N-1) with shape (N, 12).
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    n = states.shape[0]
    kbar = clamp_impact_stage(impact_stage, n)

    gamma_cost = 0.0
    gamma_imp_cost = 0.0
    for k in range(1, n + 1):
        e = states[k - 1] - refs.at(k)
        gamma_cost += e @ (weights.k_gamma * e)
        if k >= kbar or k == n:
            gamma_imp_cost += e @ (weights.k_gamma_imp * e)

    f_cost = 0.0
    df_cost = 0.0
    prev = np.asarray(f_prev, dtype=float)
    for k in range(n):
        u = controls[k]
        f_cost += u @ (weights.k_f * u)
        du = u - prev
        df_cost += du @ (weights.k_df * du)
        prev = u
    return 0.5 * (gamma_cost + gamma_imp_cost + f_cost + df_cost)
