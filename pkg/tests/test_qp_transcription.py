import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentum_mpc.contact_constraints import FootParams, stance_block
from momentum_mpc.cost_builder import CostWeights, build_references, clamp_impact_stage, evaluate_cost_direct
from momentum_mpc.momentum_model import ContactGeometry, MomentumState, WrenchPair, discretize, linearize
from momentum_mpc.qp_transcription import (
    ChiLayout,
    TripletMatrix,
    build_cost,
    build_equality,
    build_inequalities,
    chi_control_offset,
    chi_state_offset,
    dump_qp,
    load_qp_dump,
    transcribe,
)

PARAMS = FootParams()
BLOCK = stance_block(PARAMS)
GEOM = ContactGeometry([0, 0.08, 0], [0.05, -0.1, 0], 30.0, 9.81)


def random_model(rng, dt=0.01):
    gamma = rng.normal(size=9)
    gamma[2] += 0.53
    f = rng.normal(scale=50, size=12)
    f[2] += 294.3
    return discretize(linearize(MomentumState.from_vector(gamma), WrenchPair.from_vector(f), GEOM), dt), gamma


def random_weights(rng) -> CostWeights:
    kg = rng.uniform(0, 5, 9)
    kg[:2] = 0
    return CostWeights(kg, rng.uniform(0, 5, 9), rng.uniform(0, 1, 12), rng.uniform(0, 1, 12))


# -- layout --------------------------------------------------------------------


def test_offsets():
    lay = ChiLayout(25)
    assert chi_state_offset(lay, 1) == 0
    assert chi_control_offset(lay, 0) == 9
    assert chi_state_offset(lay, 25) == 21 * 24
    assert chi_control_offset(lay, 24) == 21 * 24 + 9
    assert lay.total_dim == 525
    for bad in (0, 26):
        with pytest.raises(IndexError):
            chi_state_offset(lay, bad)
    for bad in (-1, 25):
        with pytest.raises(IndexError):
            chi_control_offset(lay, bad)


@pytest.mark.parametrize("n", [1, 2, 7])
def test_layout_tiling(n):
    lay = ChiLayout(n)
    chi = np.zeros(lay.total_dim)
    for k in range(1, n + 1):
        o = chi_state_offset(lay, k)
        chi[o : o + 9] = 1
    for k in range(n):
        o = chi_control_offset(lay, k)
        chi[o : o + 12] = 2
    assert np.array_equal(chi, np.tile(np.r_[np.ones(9), 2 * np.ones(12)], n))
    states, controls = np.arange(9 * n).reshape(n, 9), np.arange(12 * n).reshape(n, 12)
    packed = lay.pack(states, controls)
    assert np.array_equal(lay.states(packed), states)
    assert np.array_equal(lay.controls(packed), controls)


def test_triplets_merge_duplicates():
    t = TripletMatrix(3, 3)
    t.add(0, 0, 1.0)
    t.add(0, 0, 2.0)
    t.add_block(1, 1, [[1, 2], [3, 4]])
    m = t.finalize()
    assert m.shape == (3, 3)
    assert np.array_equal(m.toarray(), [[3, 0, 0], [0, 1, 2], [0, 3, 4]])
    coo = m.tocoo()
    assert len(set(zip(coo.row, coo.col))) == coo.nnz


# -- equality ------------------------------------------------------------------


def test_equality_dimensions():
    model, gamma = random_model(np.random.default_rng(0))
    a, b = build_equality(model, gamma, ChiLayout(25))
    assert a.shape == (225, 525)
    assert b.shape == (225,)


def test_single_stage_equality_by_hand():
    model, gamma = random_model(np.random.default_rng(1))
    a, b = build_equality(model, gamma, ChiLayout(1))
    assert np.array_equal(a.toarray(), np.hstack([-np.eye(9), model.f]))
    assert np.allclose(b, -model.g - model.ev @ gamma - model.s0, rtol=0, atol=1e-15)


@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
@settings(max_examples=60)
def test_rollout_satisfies_equality(seed, n):
    rng = np.random.default_rng(seed)
    model, gamma = random_model(rng)
    lay = ChiLayout(n)
    a, b = build_equality(model, gamma, lay)
    controls = rng.normal(scale=100, size=(n, 12))
    chi = lay.pack(model.rollout(gamma, controls), controls)
    assert np.max(np.abs(a @ chi - b)) < 1e-12 * max(1.0, np.max(np.abs(chi)))


def test_equality_band_structure():
    model, gamma = random_model(np.random.default_rng(2))
    n = 6
    a, _ = build_equality(model, gamma, ChiLayout(n))
    coo = a.tocoo()
    for r, c in zip(coo.row, coo.col):
        k = r // 9 + 1
        assert 21 * (k - 2) <= c < 21 * k


# -- inequalities --------------------------------------------------------------


def test_inequality_rows_constant():
    lay = ChiLayout(25)
    shapes = {build_inequalities((BLOCK, BLOCK), k, lay, PARAMS)[0].shape for k in (0, 5, 25, 60)}
    assert shapes == {(25 * 2 * PARAMS.n_rows, 525)}


def test_each_row_touches_one_control_block():
    lay = ChiLayout(4)
    a, _ = build_inequalities((BLOCK, BLOCK), 2, lay, PARAMS)
    csr = a.tocsr()
    for r in range(a.shape[0]):
        cols = csr.indices[csr.indptr[r] : csr.indptr[r + 1]]
        k = (cols // 21)
        assert len(set(k)) == 1
        local = cols % 21
        assert np.all(local >= 9)
        foot = set((local - 9) // 6)
        assert len(foot) == 1


def test_swing_bounds_before_impact():
    n = 5
    lay = ChiLayout(n)
    a, b = build_inequalities((BLOCK, BLOCK), 3, lay, PARAMS)
    nc = PARAMS.n_rows
    per_stage = b.reshape(n, 2, nc)
    up = BLOCK.upper_bound_row
    for k in range(n):
        assert per_stage[k, 0, up] == PARAMS.max_normal_force
        assert per_stage[k, 1, up] == (0.0 if k < 3 else PARAMS.max_normal_force)


def test_impact_beyond_horizon_pins_right_foot():
    n = 4
    lay = ChiLayout(n)
    _, b = build_inequalities((BLOCK, BLOCK), n + 5, lay, PARAMS)
    assert np.all(b.reshape(n, 2, -1)[:, 1, BLOCK.upper_bound_row] == 0)
    _, b0 = build_inequalities((BLOCK, BLOCK), 0, lay, PARAMS)
    assert np.all(b0.reshape(n, 2, -1)[:, 1, BLOCK.upper_bound_row] == PARAMS.max_normal_force)


# -- cost ----------------------------------------------------------------------


def test_zero_weights_give_zero_cost_terms():
    lay = ChiLayout(3)
    refs = build_references(MomentumState.at_rest([0, 0, 0.5]), [0.1, 0.2], 0.53, 3)
    h, g, c = build_cost(CostWeights.zeros(), refs, 2, np.ones(12), lay)
    assert h.count_nonzero() == 0
    assert not g.any()
    assert c == 0.0


def cost_identity_gap(rng, n) -> float:
    w = random_weights(rng)
    lay = ChiLayout(n)
    refs = build_references(MomentumState.at_rest([0, 0, 0.5]), rng.normal(size=2), rng.uniform(0.3, 0.7), n)
    k_imp = int(rng.integers(0, n + 4))
    f_prev = rng.normal(scale=10, size=12)
    h, g, c = build_cost(w, refs, clamp_impact_stage(k_imp, n), f_prev, lay)
    states, controls = rng.normal(size=(n, 9)), rng.normal(scale=10, size=(n, 12))
    chi = lay.pack(states, controls)
    quad = 0.5 * chi @ (h @ chi) + g @ chi + c
    direct = evaluate_cost_direct(states, controls, refs, w, k_imp, f_prev)
    return abs(quad - direct) / max(abs(direct), 1e-300)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_cost_identity(n):
    rng = np.random.default_rng(n)
    assert max(cost_identity_gap(rng, n) for _ in range(100)) <= 1e-9


def test_cost_coupling_blocks():
    rng = np.random.default_rng(7)
    w = random_weights(rng)
    lay = ChiLayout(3)
    refs = build_references(MomentumState.at_rest([0, 0, 0.5]), [0, 0], 0.53, 3)
    h = build_cost(w, refs, 3, np.zeros(12), lay)[0].toarray()
    c0, c1, c2 = (lay.control_offset(k) for k in range(3))
    blk = lambda r, c: h[r : r + 12, c : c + 12]  # noqa: E731
    assert np.allclose(blk(c0, c1), -np.diag(w.k_df))
    assert np.allclose(blk(c1, c0), -np.diag(w.k_df))
    assert np.allclose(blk(c0, c0), np.diag(w.k_f + 2 * w.k_df))
    assert np.allclose(blk(c2, c2), np.diag(w.k_f + w.k_df))
    assert np.allclose(blk(c0, c2), 0)


def test_previous_wrench_enters_first_block_only():
    rng = np.random.default_rng(8)
    w = random_weights(rng)
    lay = ChiLayout(4)
    refs = build_references(MomentumState.at_rest([0, 0, 0.5]), [0, 0], 0.53, 4)
    fp = rng.normal(size=12)
    _, g1, c1 = build_cost(w, refs, 4, fp, lay)
    _, g0, c0 = build_cost(w, refs, 4, np.zeros(12), lay)
    diff = g1 - g0
    o = lay.control_offset(0)
    assert np.allclose(diff[o : o + 12], -w.k_df * fp)
    diff[o : o + 12] = 0
    assert not diff.any()
    assert c1 - c0 == pytest.approx(0.5 * fp @ (w.k_df * fp))


@given(st.integers(0, 2**31 - 1), st.integers(1, 5))
@settings(max_examples=40)
def test_hessian_symmetric_psd(seed, n):
    rng = np.random.default_rng(seed)
    lay = ChiLayout(n)
    refs = build_references(MomentumState.at_rest([0, 0, 0.5]), [0, 0], 0.53, n)
    h, _, _ = build_cost(random_weights(rng), refs, int(rng.integers(0, n + 2)), np.zeros(12), lay)
    assert abs(h - h.T).max() == 0
    for _ in range(5):
        x = rng.normal(size=lay.total_dim)
        assert x @ (h @ x) >= -1e-10 * (x @ x)


# -- full problem and dump -----------------------------------------------------


def test_transcribe_and_dump_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    model, gamma = random_model(rng)
    n = 3
    refs = build_references(MomentumState.from_vector(gamma), [0, 0.05], 0.53, n)
    prob = transcribe(model, gamma, CostWeights.default(), refs, 2, rng.normal(size=12), (BLOCK, BLOCK), PARAMS, n)
    assert prob.n == 63
    path = tmp_path / "qp.txt"
    dump_qp(prob, path)
    back = load_qp_dump(path)
    for name in ("hessian", "eq_matrix", "ineq_matrix"):
        assert abs(getattr(prob, name) - getattr(back, name)).max() == 0
    for name in ("gradient", "eq_rhs", "ineq_rhs"):
        assert np.array_equal(getattr(prob, name), getattr(back, name))
    assert back.cost_constant == prob.cost_constant
    x = rng.normal(size=prob.n)
    assert back.objective(x) == prob.objective(x)
