"""Linear wrench feasibility for flat rectangular feet.

Each foot contributes the same number of rows at every stage so the QP keeps
a fixed shape across the contact switch. A swinging foot is handled by
setting both normal-force bounds to zero; friction, CoP and torsional rows
then pin the rest of the wrench to zero as well.

Row layout of one :class:`StanceConstraintBlock`::

    [pyramid facets (n)] [CoP (4)] [torsional (2)] [-f_z <= -lo] [f_z <= hi]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull


@dataclass(frozen=True)
class FootParams:
    friction_coefficient: float = 0.5
    torsional_friction_coefficient: float = 0.01
    foot_half_length: float = 0.06
    foot_half_width: float = 0.04
    max_normal_force: float = 2 * 30.0 * 9.81
    pyramid_facets: int = 4

    def __post_init__(self):
        if not self.friction_coefficient > 0:
            raise ValueError("friction_coefficient must be positive")
        if not self.torsional_friction_coefficient >= 0:
            raise ValueError("torsional_friction_coefficient must be non-negative")
        if not (self.foot_half_length > 0 and self.foot_half_width > 0):
            raise ValueError("foot half dimensions must be positive")
        if not self.max_normal_force > 0:
            raise ValueError("max_normal_force must be positive")
        n = self.pyramid_facets
        if int(n) != n or n < 4 or n % 2:
            raise ValueError(f"pyramid_facets must be an even integer >= 4, got {n}")

    @property
    def n_rows(self) -> int:
        return int(self.pyramid_facets) + 8


@dataclass(frozen=True)
class StanceConstraintBlock:
    a: np.ndarray
    b: np.ndarray

    @property
    def lower_bound_row(self) -> int:
        return self.a.shape[0] - 2

    @property
    def upper_bound_row(self) -> int:
        return self.a.shape[0] - 1

    def with_normal_bounds(self, lower: float, upper: float) -> "StanceConstraintBlock":
        b = self.b.copy()
        b[self.lower_bound_row] = -lower
        b[self.upper_bound_row] = upper
        return StanceConstraintBlock(self.a, b)

    def is_feasible(self, wrench, tol: float = 0.0) -> bool:
        return bool(np.all(self.a @ np.asarray(wrench, dtype=float) <= self.b + tol))


def stance_block(params: FootParams) -> StanceConstraintBlock:
    """Constraint rows ``a @ [f; tau] <= b`` for a foot in contact.

    The friction pyramid is inscribed in the circular cone with its vertices
    on the transverse axes: facet ``j`` has outward normal at angle
    ``(2 j + 1) pi / n`` and admits a tangential component of at most
    ``mu cos(pi / n) f_z`` along it. Pure x or y traction is therefore
    limited by exactly ``mu f_z``. The CoP rows are the rectangle test
    multiplied through by ``f_z``.
    """
    n = int(params.pyramid_facets)
    mu = params.friction_coefficient * np.cos(np.pi / n)
    lx, ly = params.foot_half_length, params.foot_half_width
    rows = []
    for j in range(n):
        t = (2 * j + 1) * np.pi / n
        c, s = np.cos(t), np.sin(t)
        rows.append([c, s, -mu, 0, 0, 0])
    # CoP = (-tau_y / f_z, tau_x / f_z) inside [-lx, lx] x [-ly, ly]
    rows += [
        [0, 0, -lx, 0, -1, 0],
        [0, 0, -lx, 0, 1, 0],
        [0, 0, -ly, 1, 0, 0],
        [0, 0, -ly, -1, 0, 0],
    ]
    k = params.torsional_friction_coefficient
    rows += [
        [0, 0, -k, 0, 0, 1],
        [0, 0, -k, 0, 0, -1],
    ]
    rows += [
        [0, 0, -1, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
    ]
    a = np.array(rows, dtype=float)
    b = np.zeros(a.shape[0])
    b[-1] = params.max_normal_force
    return StanceConstraintBlock(a, b)


def normal_force_bounds(stage: int, impact_stage: int, params: FootParams) -> tuple[float, float]:
    """Normal force bounds of the stepping foot at a given stage."""
    if stage < impact_stage:
        return 0.0, 0.0
    return 0.0, params.max_normal_force


def foot_corners(position, params: FootParams) -> np.ndarray:
    """Transverse-plane corners of an axis-aligned foot, counter-clockwise."""
    x, y = np.asarray(position, dtype=float)[:2]
    lx, ly = params.foot_half_length, params.foot_half_width
    return np.array([[x - lx, y - ly], [x + lx, y - ly], [x + lx, y + ly], [x - lx, y + ly]])


class SupportPolygon:
    """Convex polygon in the transverse plane, vertices counter-clockwise."""

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[0] < 3:
            raise ValueError("a support polygon needs at least three vertices")
        edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        normals = np.column_stack([edges[:, 1], -edges[:, 0]])
        norms = np.linalg.norm(normals, axis=1)
        self._normals = normals / norms[:, None]
        self._offsets = np.einsum("ij,ij->i", self._normals, self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        """Area centroid."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area = cross.sum() / 2.0
        cx = ((x + xn) * cross).sum() / (6.0 * area)
        cy = ((y + yn) * cross).sum() / (6.0 * area)
        return np.array([cx, cy])

    def signed_distance(self, point) -> float:
        """Euclidean distance to the boundary, negative inside."""
        p = np.asarray(point, dtype=float)[:2]
        slack = self._normals @ p - self._offsets
        if np.all(slack <= 0):
            return float(slack.max())
        best = np.inf
        for a, b in zip(self.vertices, np.roll(self.vertices, -1, axis=0)):
            ab = b - a
            t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(p - (a + t * ab))))
        return best

    def contains(self, point, margin: float = 0.0) -> bool:
        return self.signed_distance(point) <= margin


def support_polygon(contacts, params: FootParams) -> SupportPolygon:
    """Convex hull of the active feet rectangles.

    ``contacts`` is an iterable of foot positions (only active ones).
    """
    positions = [np.asarray(p, dtype=float) for p in contacts]
    if not positions:
        raise ValueError("support polygon needs at least one active contact")
    pts = np.vstack([foot_corners(p, params) for p in positions])
    hull = ConvexHull(pts)
    # qhull returns 2-D hull vertices counter-clockwise
    return SupportPolygon(pts[hull.vertices])
