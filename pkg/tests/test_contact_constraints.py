import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from momentum_mpc.contact_constraints import (
    FootParams,
    foot_corners,
    normal_force_bounds,
    stance_block,
    support_polygon,
)

PARAMS = FootParams()


def test_friction_limit_along_x():
    block = stance_block(FootParams(friction_coefficient=0.5, pyramid_facets=4))
    assert block.is_feasible([49, 0, 100, 0, 0, 0])
    assert not block.is_feasible([51, 0, 100, 0, 0, 0])


@pytest.mark.parametrize("facets", [4, 6, 8, 12])
def test_pure_normal_force_and_origin_feasible(facets):
    block = stance_block(FootParams(pyramid_facets=facets))
    assert block.is_feasible([0, 0, 100, 0, 0, 0])
    assert block.is_feasible(np.zeros(6))


def test_row_layout():
    block = stance_block(PARAMS)
    n = PARAMS.pyramid_facets
    assert block.a.shape == (n + 8, 6)
    assert PARAMS.n_rows == n + 8
    assert np.array_equal(block.a[block.lower_bound_row], [0, 0, -1, 0, 0, 0])
    assert np.array_equal(block.a[block.upper_bound_row], [0, 0, 1, 0, 0, 0])
    assert block.b[block.upper_bound_row] == PARAMS.max_normal_force
    # CoP rows only involve the normal force and the tilting torques
    cop = block.a[n : n + 4]
    assert not cop[:, [0, 1, 5]].any()
    torsion = block.a[n + 4 : n + 6]
    assert not torsion[:, [0, 1, 3, 4]].any()


def test_cop_limits():
    block = stance_block(PARAMS)
    fz = 100.0
    # CoP x = -tau_y / fz, so tau_y = -0.05 fz puts it at 5 cm
    assert block.is_feasible([0, 0, fz, 0, -0.05 * fz, 0])
    assert not block.is_feasible([0, 0, fz, 0, -0.07 * fz, 0])
    assert block.is_feasible([0, 0, fz, 0.03 * fz, 0, 0])
    assert not block.is_feasible([0, 0, fz, 0.05 * fz, 0, 0])


def test_torsion_and_normal_bounds():
    block = stance_block(PARAMS)
    assert block.is_feasible([0, 0, 100, 0, 0, 0.9])
    assert not block.is_feasible([0, 0, 100, 0, 0, 1.1])
    assert not block.is_feasible([0, 0, -1, 0, 0, 0])
    assert not block.is_feasible([0, 0, PARAMS.max_normal_force + 1, 0, 0, 0])


def sample_wrenches(rng, params, count):
    fz = rng.uniform(1e-3, params.max_normal_force, count)
    mu = params.friction_coefficient
    w = np.column_stack([
        rng.uniform(-1.2, 1.2, count) * mu * fz,
        rng.uniform(-1.2, 1.2, count) * mu * fz,
        fz,
        rng.uniform(-1.2, 1.2, count) * params.foot_half_width * fz,
        rng.uniform(-1.2, 1.2, count) * params.foot_half_length * fz,
        rng.uniform(-1.2, 1.2, count) * params.torsional_friction_coefficient * fz,
    ])
    return w


@pytest.mark.parametrize("facets", [4, 6, 8])
def test_feasible_wrench_inside_exact_cone_and_foot(facets):
    params = FootParams(pyramid_facets=facets)
    block = stance_block(params)
    rng = np.random.default_rng(facets)
    hits = 0
    for w in sample_wrenches(rng, params, 4000):
        if not block.is_feasible(w):
            continue
        hits += 1
        fx, fy, fz, tx, ty, _ = w
        assert np.hypot(fx, fy) <= params.friction_coefficient * fz * (1 + 1e-12)
        cop = (-ty / fz, tx / fz)
        assert abs(cop[0]) <= params.foot_half_length + 1e-12
        assert abs(cop[1]) <= params.foot_half_width + 1e-12
    assert hits > 100


@given(arrays(float, 6, elements=st.floats(-1e3, 1e3, allow_nan=False)))
@settings(max_examples=300)
def test_swing_bounds_admit_only_zero(w):
    lo, hi = normal_force_bounds(0, 5, PARAMS)
    block = stance_block(PARAMS).with_normal_bounds(lo, hi)
    if np.any(w != 0):
        assert not block.is_feasible(w)
    assert block.is_feasible(np.zeros(6))


def test_row_count_independent_of_phase():
    block = stance_block(PARAMS)
    assert block.with_normal_bounds(0, 0).a.shape == block.a.shape
    assert block.with_normal_bounds(0, 0).b.shape == block.b.shape


def test_normal_force_bounds_switch():
    assert normal_force_bounds(3, 10, PARAMS) == (0.0, 0.0)
    assert normal_force_bounds(10, 10, PARAMS) == (0.0, PARAMS.max_normal_force)
    assert all(normal_force_bounds(k, 0, PARAMS) == (0.0, PARAMS.max_normal_force) for k in range(25))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"friction_coefficient": 0.0},
        {"foot_half_length": 0.0},
        {"foot_half_width": -0.1},
        {"max_normal_force": 0.0},
        {"pyramid_facets": 3},
        {"pyramid_facets": 5},
        {"torsional_friction_coefficient": -0.1},
    ],
)
def test_invalid_foot_params(kwargs):
    with pytest.raises(ValueError):
        FootParams(**kwargs)


# -- support polygon -------------------------------------------------------------


def test_single_foot_polygon():
    poly = support_polygon([[0, 0, 0]], PARAMS)
    assert sorted(map(tuple, np.round(poly.vertices, 12))) == sorted(
        [(-0.06, -0.04), (0.06, -0.04), (0.06, 0.04), (-0.06, 0.04)]
    )
    assert np.allclose(poly.centroid, [0, 0], atol=1e-15)


def test_two_feet_polygon():
    poly = support_polygon([[0, 0.1, 0], [0, -0.1, 0]], PARAMS)
    assert np.allclose(poly.centroid, [0, 0], atol=1e-15)
    assert poly.signed_distance([0, 0]) < 0
    assert poly.signed_distance([1, 0]) > 0
    assert poly.contains([0, 0.13])
    assert not poly.contains([0, 0.15])


def test_signed_distance_values():
    poly = support_polygon([[0, 0, 0]], PARAMS)
    assert poly.signed_distance([0, 0]) == pytest.approx(-0.04)
    assert poly.signed_distance([0.16, 0]) == pytest.approx(0.10)
    # nearest feature is a corner
    assert poly.signed_distance([0.09, 0.08]) == pytest.approx(0.05)


def test_polygon_needs_a_contact():
    with pytest.raises(ValueError):
        support_polygon([], PARAMS)


def test_foot_corners_counter_clockwise():
    c = foot_corners([1, 2, 0], PARAMS)
    area = 0.5 * np.sum(c[:, 0] * np.roll(c[:, 1], -1) - np.roll(c[:, 0], -1) * c[:, 1])
    assert area == pytest.approx(0.12 * 0.08)
