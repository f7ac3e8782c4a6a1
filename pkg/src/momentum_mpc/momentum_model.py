"""Reduced centroidal momentum dynamics of a biped with two foot contacts.

The state stacks CoM position, CoM velocity and centroidal angular momentum::

    gamma = [x_com; xd_com; h_ang]            (9,)

and the control stacks the left and right contact wrenches, force before
torque::

    f = [f_l; tau_l; f_r; tau_r]              (12,)

The exact rate of change is bilinear in (x_com, forces) through the lever
arms ``x_i - x_com``. :func:`linearize` expands it to first order around the
latest feedback, which yields an affine model that fits inside a QP, and
:func:`discretize` turns that into a forward-Euler step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81  # [m] / [s]^2

STATE_DIM = 9
CONTROL_DIM = 12


def _vec3(v) -> np.ndarray:
    out = np.asarray(v, dtype=float).reshape(3)
    return out


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ y == np.cross(v, y)``."""
    x, y, z = _vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def adjoint_transform(foot_position, com_position) -> np.ndarray:
    """Map a wrench applied at the foot to the equivalent wrench at the CoM.

    Returns the 6x6 block matrix ``[[I, 0], [skew(x_foot - x_com), I]]``.
    """
    out = np.eye(6)
    out[3:, :3] = skew(_vec3(foot_position) - _vec3(com_position))
    return out


@dataclass(frozen=True)
class MomentumState:
    com_position: np.ndarray
    com_velocity: np.ndarray
    angular_momentum: np.ndarray

    def __post_init__(self):
        for name in ("com_position", "com_velocity", "angular_momentum"):
            v = _vec3(getattr(self, name))
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite, got {v}")
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.com_position, self.com_velocity, self.angular_momentum])

    @classmethod
    def from_vector(cls, gamma) -> "MomentumState":
        gamma = np.asarray(gamma, dtype=float).reshape(STATE_DIM)
        return cls(gamma[0:3], gamma[3:6], gamma[6:9])

    @classmethod
    def at_rest(cls, com_position) -> "MomentumState":
        return cls(com_position, np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class ContactWrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("force", "torque"):
            v = _vec3(getattr(self, name))
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @classmethod
    def from_vector(cls, w) -> "ContactWrench":
        w = np.asarray(w, dtype=float).reshape(6)
        return cls(w[:3], w[3:])


@dataclass(frozen=True)
class WrenchPair:
    left: ContactWrench = field(default_factory=ContactWrench)
    right: ContactWrench = field(default_factory=ContactWrench)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.left.as_vector(), self.right.as_vector()])

    @classmethod
    def from_vector(cls, f) -> "WrenchPair":
        f = np.asarray(f, dtype=float).reshape(CONTROL_DIM)
        return cls(ContactWrench.from_vector(f[:6]), ContactWrench.from_vector(f[6:]))

    def total_force(self) -> np.ndarray:
        return self.left.force + self.right.force


@dataclass(frozen=True)
class ContactGeometry:
    left_foot_position: np.ndarray
    right_foot_position: np.ndarray
    mass: float = 30.0
    gravity: float = GRAVITY

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.gravity > 0:
            raise ValueError(f"gravity must be positive, got {self.gravity}")
        for name in ("left_foot_position", "right_foot_position"):
            v = _vec3(getattr(self, name))
            v.flags.writeable = False
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class ContinuousAffineModel:
    """``gamma_dot = ev_tilde @ gamma + f_tilde @ f + g_tilde + s0_tilde``."""

    ev_tilde: np.ndarray
    f_tilde: np.ndarray
    g_tilde: np.ndarray
    s0_tilde: np.ndarray
    expansion_com: np.ndarray
    expansion_wrench: WrenchPair

    def rate(self, gamma, f) -> np.ndarray:
        return self.ev_tilde @ gamma + self.f_tilde @ f + self.g_tilde + self.s0_tilde


@dataclass(frozen=True)
class DiscreteModel:
    """``gamma(k+1) = ev @ gamma(k) + f @ u(k) + g + s0``."""

    ev: np.ndarray
    f: np.ndarray
    g: np.ndarray
    s0: np.ndarray
    dt: float

    def step(self, gamma, u) -> np.ndarray:
        return self.ev @ gamma + self.f @ u + self.g + self.s0

    def rollout(self, gamma0, controls) -> np.ndarray:
        """States gamma(1..N) for controls u(0..N-1), shape (N, 9)."""
        gamma = np.asarray(gamma0, dtype=float)
        out = []
        for u in np.atleast_2d(controls):
            gamma = self.step(gamma, u)
            out.append(gamma)
        return np.array(out)


def exact_momentum_rate_vec(gamma, f, left_foot, right_foot, mass, gravity) -> np.ndarray:
    """Array form of :func:`exact_momentum_rate` for hot loops."""
    x = gamma[0:3]
    fl, tl, fr, tr = f[0:3], f[3:6], f[6:9], f[9:12]
    out = np.empty(STATE_DIM)
    out[0:3] = gamma[3:6]
    out[3:6] = (fl + fr) / mass
    out[5] -= gravity
    out[6:9] = np.cross(left_foot - x, fl) + tl + np.cross(right_foot - x, fr) + tr
    return out


def exact_momentum_rate(
    state: MomentumState, wrenches: WrenchPair, geometry: ContactGeometry
) -> np.ndarray:
    """Exact (bilinear) momentum rate; no Taylor truncation."""
    return exact_momentum_rate_vec(
        state.as_vector(),
        wrenches.as_vector(),
        geometry.left_foot_position,
        geometry.right_foot_position,
        geometry.mass,
        geometry.gravity,
    )


def linearize(
    expansion_state: MomentumState, expansion_wrench: WrenchPair, geometry: ContactGeometry
) -> ContinuousAffineModel:
    """First-order expansion of the angular momentum rate around feedback.

    Only the ``(x_i - x_com) x force_i`` products are nonlinear. Expanding
    them around ``(x_com0, force0)`` and using anticommutativity of the cross
    product gives a term ``skew(force_l0 + force_r0) @ x_com`` in the state
    matrix, lever arms frozen at ``x_com0`` in the input matrix, and a
    constant offset ``-skew(force_l0 + force_r0) @ x_com0``.
    """
    m = geometry.mass
    x0 = expansion_state.com_position
    fsum = expansion_wrench.total_force()
    fsum_hat = skew(fsum)

    ev = np.zeros((STATE_DIM, STATE_DIM))
    ev[0:3, 3:6] = np.eye(3)
    ev[6:9, 0:3] = fsum_hat

    fm = np.zeros((STATE_DIM, CONTROL_DIM))
    fm[3:6, 0:3] = np.eye(3) / m
    fm[3:6, 6:9] = np.eye(3) / m
    fm[6:9, 0:3] = skew(geometry.left_foot_position - x0)
    fm[6:9, 3:6] = np.eye(3)
    fm[6:9, 6:9] = skew(geometry.right_foot_position - x0)
    fm[6:9, 9:12] = np.eye(3)

    g = np.zeros(STATE_DIM)
    g[5] = -geometry.gravity

    s0 = np.zeros(STATE_DIM)
    s0[6:9] = -fsum_hat @ x0

    return ContinuousAffineModel(ev, fm, g, s0, x0.copy(), expansion_wrench)


def discretize(model: ContinuousAffineModel, dt: float) -> DiscreteModel:
    """Forward-Euler discretization with step ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return DiscreteModel(
        ev=np.eye(STATE_DIM) + dt * model.ev_tilde,
        f=dt * model.f_tilde,
        g=dt * model.g_tilde,
        s0=dt * model.s0_tilde,
        dt=float(dt),
    )


def equilibrium_wrench(geometry: ContactGeometry, com_position, support: str = "left") -> WrenchPair:
    """Wrench pair that holds the CoM static.

    ``support`` is ``"left"``, ``"right"`` or ``"double"``. For double support
    the weight is split so that the net moment about the CoM vanishes, which
    requires the CoM to project onto the segment between the feet; otherwise
    the split falls back to half and half.
    """
    weight = geometry.mass * geometry.gravity
    if support == "left":
        return WrenchPair(ContactWrench([0, 0, weight]), ContactWrench())
    if support == "right":
        return WrenchPair(ContactWrench(), ContactWrench([0, 0, weight]))
    if support != "double":
        raise ValueError(f"unknown support {support!r}")
    xl = geometry.left_foot_position[:2]
    xr = geometry.right_foot_position[:2]
    d = xr - xl
    denom = float(d @ d)
    share_right = 0.5
    if denom > 0:
        share_right = float(np.clip((_vec3(com_position)[:2] - xl) @ d / denom, 0.0, 1.0))
    return WrenchPair(
        ContactWrench([0, 0, (1 - share_right) * weight]),
        ContactWrench([0, 0, share_right * weight]),
    )
