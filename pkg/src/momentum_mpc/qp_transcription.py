"""Sparse QP transcription of the horizon problem.

Decision vector, per stage ``k = 0..N-1``::

    chi = [gamma(1); f(0); gamma(2); f(1); ...; gamma(N); f(N-1)]

so ``gamma(k)`` starts at ``21 (k - 1)`` and ``f(k)`` at ``21 k + 9``. The
states stay decision variables; the dynamics enter as a banded equality
block and the wrench constraints as a per-stage, per-foot inequality block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .contact_constraints import FootParams, StanceConstraintBlock, normal_force_bounds
from .cost_builder import CostWeights, ReferenceTrajectory, clamp_impact_stage, stage_cost_weight
from .momentum_model import CONTROL_DIM, STATE_DIM, DiscreteModel, MomentumState

STAGE_DIM = STATE_DIM + CONTROL_DIM


@dataclass(frozen=True)
class ChiLayout:
    n_stages: int
    state_dim: int = STATE_DIM
    control_dim: int = CONTROL_DIM

    def __post_init__(self):
        if self.n_stages < 1:
            raise ValueError("n_stages must be at least 1")

    @property
    def stage_dim(self) -> int:
        return self.state_dim + self.control_dim

    @property
    def total_dim(self) -> int:
        return self.stage_dim * self.n_stages

    def state_offset(self, k: int) -> int:
        if not 1 <= k <= self.n_stages:
            raise IndexError(f"state index must be in [1, {self.n_stages}], got {k}")
        return self.stage_dim * (k - 1)

    def control_offset(self, k: int) -> int:
        if not 0 <= k <= self.n_stages - 1:
            raise IndexError(f"control index must be in [0, {self.n_stages - 1}], got {k}")
        return self.stage_dim * k + self.state_dim

    def states(self, chi) -> np.ndarray:
        """gamma(1..N) as an (N, 9) array."""
        blocks = np.asarray(chi).reshape(self.n_stages, self.stage_dim)
        return blocks[:, : self.state_dim]

    def controls(self, chi) -> np.ndarray:
        """f(0..N-1) as an (N, 12) array."""
        blocks = np.asarray(chi).reshape(self.n_stages, self.stage_dim)
        return blocks[:, self.state_dim :]

    def pack(self, states, controls) -> np.ndarray:
        return np.hstack([np.asarray(states, dtype=float), np.asarray(controls, dtype=float)]).ravel()


def chi_state_offset(layout: ChiLayout, k: int) -> int:
    return layout.state_offset(k)


def chi_control_offset(layout: ChiLayout, k: int) -> int:
    return layout.control_offset(k)


class TripletMatrix:
    """Accumulate dense blocks as (row, col, value) triplets.

    :meth:`finalize` sums duplicates and returns a CSC matrix.
    """

    def __init__(self, rows: int, cols: int):
        self.shape = (rows, cols)
        self._r: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self._v: list[np.ndarray] = []

    def add(self, row: int, col: int, value: float) -> None:
        self._r.append(np.array([row]))
        self._c.append(np.array([col]))
        self._v.append(np.array([float(value)]))

    def add_block(self, row0: int, col0: int, block) -> None:
        block = np.atleast_2d(np.asarray(block, dtype=float))
        r, c = np.nonzero(block)
        self._r.append(r + row0)
        self._c.append(c + col0)
        self._v.append(block[r, c])

    def add_diagonal(self, row0: int, col0: int, diag) -> None:
        diag = np.asarray(diag, dtype=float)
        idx = np.flatnonzero(diag)
        self._r.append(idx + row0)
        self._c.append(idx + col0)
        self._v.append(diag[idx])

    def add_blocks(self, row0s, col0s, blocks) -> None:
        """Place one block per ``(row0, col0)`` pair.

        ``blocks`` is either a single 2-D block repeated at every offset or a
        stack with one block per offset.
        """
        row0s = np.asarray(row0s, dtype=int)
        col0s = np.asarray(col0s, dtype=int)
        blocks = np.asarray(blocks, dtype=float)
        if blocks.ndim == 2:
            blocks = np.broadcast_to(blocks, (row0s.size,) + blocks.shape)
        # one pattern for the whole stack, so a weight switching on at some
        # stage does not change the sparsity of the result
        r, c = np.nonzero(np.any(blocks != 0, axis=0))
        self._r.append((row0s[:, None] + r).ravel())
        self._c.append((col0s[:, None] + c).ravel())
        self._v.append(blocks[:, r, c].ravel())

    def triplets(self):
        if not self._r:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        return np.concatenate(self._r), np.concatenate(self._c), np.concatenate(self._v)

    def finalize(self) -> sp.csc_matrix:
        """Sum duplicates; explicit zeros stay so patterns are stable."""
        r, c, v = self.triplets()
        out = sp.csc_matrix((v, (r, c)), shape=self.shape)
        out.sum_duplicates()
        return out


@dataclass
class QpProblem:
    """``min 1/2 x'Hx + g'x + c  s.t.  A_eq x = b_eq,  A x <= b``."""

    hessian: sp.csc_matrix
    gradient: np.ndarray
    eq_matrix: sp.csc_matrix
    eq_rhs: np.ndarray
    ineq_matrix: sp.csc_matrix
    ineq_rhs: np.ndarray
    cost_constant: float = 0.0
    layout: ChiLayout | None = None

    @property
    def n(self) -> int:
        return self.hessian.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.hessian @ x) + self.gradient @ x + self.cost_constant)


def build_equality(model: DiscreteModel, gamma0, layout: ChiLayout):
    """Dynamics rows ``ev gamma(k) + f u(k) - gamma(k+1) = -g - s0``.

    ``gamma(0)`` is data, so the first block of rows moves ``ev @ gamma0`` to
    the right-hand side.
    """
    if isinstance(gamma0, MomentumState):
        gamma0 = gamma0.as_vector()
    gamma0 = np.asarray(gamma0, dtype=float)
    n = layout.n_stages
    nx = layout.state_dim
    a = TripletMatrix(nx * n, layout.total_dim)
    rhs = np.tile(-model.g - model.s0, n)
    stages = np.arange(n)
    rows = nx * stages
    a.add_blocks(rows, layout.stage_dim * stages, -np.eye(nx))
    a.add_blocks(rows, layout.stage_dim * stages + nx, model.f)
    # gamma(k) for k >= 1 is a decision variable; gamma(0) is data
    a.add_blocks(rows[1:], layout.stage_dim * (stages[1:] - 1), model.ev)
    rhs[:nx] -= model.ev @ gamma0
    return a.finalize(), rhs


def build_inequalities(
    stance_blocks,
    impact_stage: int,
    layout: ChiLayout,
    params: FootParams,
):
    """Stack both feet's wrench constraints at every stage.

    ``stance_blocks`` is ``(left, right)``. The left foot keeps its stance
    bounds over the whole horizon; the right foot's normal-force bounds
    switch from (0, 0) to stance values at ``impact_stage``. The row count
    does not depend on ``impact_stage``.
    """
    left, right = stance_blocks
    n = layout.n_stages
    nc = left.a.shape[0]
    if right.a.shape[0] != nc:
        raise ValueError("both feet must contribute the same number of rows")
    a = TripletMatrix(2 * nc * n, layout.total_dim)
    stages = np.arange(n)
    rows = 2 * nc * stages
    cols = layout.stage_dim * stages + layout.state_dim
    a.add_blocks(rows, cols, left.a)
    a.add_blocks(rows + nc, cols + 6, right.a)
    b = np.empty((n, 2, nc))
    b[:, 0] = left.b
    for k in range(n):
        lo, hi = normal_force_bounds(k, impact_stage, params)
        b[k, 1] = right.with_normal_bounds(lo, hi).b
    return a.finalize(), b.ravel()


def build_cost(
    weights: CostWeights,
    refs: ReferenceTrajectory,
    impact_stage_clamped: int,
    f_prev,
    layout: ChiLayout,
):
    """Hessian, gradient and constant of the horizon cost in ``chi``."""
    n = layout.n_stages
    if refs.n_stages < n:
        raise ValueError("references must cover every stage")
    f_prev = np.asarray(f_prev, dtype=float)
    h = TripletMatrix(layout.total_dim, layout.total_dim)
    nx, nu, sd = layout.state_dim, layout.control_dim, layout.stage_dim
    w = np.array([stage_cost_weight(k, impact_stage_clamped, n, weights) for k in range(1, n + 1)])
    ref = np.asarray(refs.states[:n], dtype=float)
    stages = np.arange(n)
    h.add_blocks(sd * stages, sd * stages, w[:, :, None] * np.eye(nx))
    grad = np.zeros((n, sd))
    grad[:, :nx] = -w * ref
    const = 0.5 * float(np.sum(w * ref * ref))

    kf, kdf = weights.k_f, weights.k_df
    # f(k) enters |f(k) - f(k-1)| and, except at the end, |f(k+1) - f(k)|
    diag = np.tile(kf + 2.0 * kdf, (n, 1))
    diag[-1] = kf + kdf
    ctrl = sd * stages + nx
    h.add_blocks(ctrl, ctrl, diag[:, :, None] * np.eye(nu))
    h.add_blocks(ctrl[:-1], ctrl[1:], np.diag(-kdf))
    h.add_blocks(ctrl[1:], ctrl[:-1], np.diag(-kdf))
    grad[0, nx:] = -kdf * f_prev
    const += 0.5 * f_prev @ (kdf * f_prev)
    grad = grad.ravel()
    return h.finalize(), grad, const


def transcribe(
    model: DiscreteModel,
    gamma0,
    weights: CostWeights,
    refs: ReferenceTrajectory,
    impact_stage: int,
    f_prev,
    stance_blocks,
    params: FootParams,
    n_stages: int,
) -> QpProblem:
    """Assemble the full QP for one controller cycle."""
    layout = ChiLayout(n_stages)
    a_eq, b_eq = build_equality(model, gamma0, layout)
    a_in, b_in = build_inequalities(stance_blocks, impact_stage, layout, params)
    hess, grad, const = build_cost(
        weights, refs, clamp_impact_stage(impact_stage, n_stages), f_prev, layout
    )
    return QpProblem(hess, grad, a_eq, b_eq, a_in, b_in, const, layout)


_DUMP_SECTIONS = ("hessian", "gradient", "eq_matrix", "eq_rhs", "ineq_matrix", "ineq_rhs")


def dump_qp(problem: QpProblem, path) -> None:
    """Write the QP as plain text for offline inspection.

    The file is a sequence of sections. Each starts with a line
    ``%%section <name> <kind> <rows> <cols> <nnz>`` where ``kind`` is
    ``matrix`` or ``vector``, followed by ``nnz`` lines of 1-based
    ``row col value`` (matrices) or ``rows`` lines of ``value`` (vectors).
    A final ``%%constant <value>`` line carries the cost constant.
    """
    with open(path, "w") as fh:
        fh.write("%%MomentumMPC QP dump v1\n")
        for name in _DUMP_SECTIONS:
            obj = getattr(problem, name)
            if sp.issparse(obj):
                coo = obj.tocoo()
                fh.write(f"%%section {name} matrix {obj.shape[0]} {obj.shape[1]} {coo.nnz}\n")
                for r, c, v in zip(coo.row, coo.col, coo.data):
                    fh.write(f"{r + 1} {c + 1} {float(v)!r}\n")
            else:
                vec = np.asarray(obj, dtype=float)
                fh.write(f"%%section {name} vector {vec.size} 1 {vec.size}\n")
                for v in vec:
                    fh.write(f"{float(v)!r}\n")
        fh.write(f"%%constant {float(problem.cost_constant)!r}\n")


def load_qp_dump(path) -> QpProblem:
    """Inverse of :func:`dump_qp`."""
    parts = {}
    const = 0.0
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if head[0] == "%%constant":
            const = float(head[1])
            i += 1
            continue
        _, name, kind, rows, cols, nnz = head
        rows, cols, nnz = int(rows), int(cols), int(nnz)
        body = lines[i + 1 : i + 1 + nnz]
        if kind == "matrix":
            trip = np.array([ln.split() for ln in body], dtype=float).reshape(-1, 3)
            parts[name] = sp.csc_matrix(
                (trip[:, 2], (trip[:, 0].astype(int) - 1, trip[:, 1].astype(int) - 1)),
                shape=(rows, cols),
            )
        else:
            parts[name] = np.array([float(v) for v in body])
        i += 1 + nnz
    return QpProblem(cost_constant=const, **parts)
