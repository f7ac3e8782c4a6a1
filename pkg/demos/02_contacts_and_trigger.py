"""
Contact constraints, support polygon and the step trigger
=========================================================

Each foot in contact must keep its wrench inside a linearized friction
cone, with the center of pressure on the sole and bounded torsion. The
swing foot gets the same rows with its normal force pinned to zero, so the
QP never changes shape when a step starts.
"""

# %%
import numpy as np

from momentum_mpc import FootParams, MomentumState, stance_block, support_polygon
from momentum_mpc.contact_constraints import normal_force_bounds
from momentum_mpc.mpc_controller import ControllerConfig, capture_point, step_trigger

params = FootParams()
block = stance_block(params)
print(f"{block.a.shape[0]} rows per foot: {params.pyramid_facets} friction facets, 4 CoP, 2 torsion, 2 normal")

for name, w in [
    ("pure normal load", [0, 0, 200, 0, 0, 0]),
    ("tangential 0.4 fz", [80, 0, 200, 0, 0, 0]),
    ("tangential 0.6 fz", [120, 0, 200, 0, 0, 0]),
    ("CoP 5 cm forward", [0, 0, 200, 0, -10, 0]),
    ("CoP 7 cm forward", [0, 0, 200, 0, -14, 0]),
]:
    print(f"  {name:20s} feasible: {block.is_feasible(w)}")

# %%
# Before impact the swing foot may only produce the zero wrench.
lo, hi = normal_force_bounds(stage=3, impact_stage=10, params=params)
swing = block.with_normal_bounds(lo, hi)
print("\nswing foot, fz = 1 N feasible:", swing.is_feasible([0, 0, 1, 0, 0, 0]))
print("swing foot, zero wrench feasible:", swing.is_feasible(np.zeros(6)))

# %%
# The capture point decides whether a step is needed.
cfg = ControllerConfig()
left = np.array([0.0, 0.08, 0.0])
poly = support_polygon([left], params)
print(f"\nsingle-support polygon centroid {poly.centroid}, trigger margin {cfg.trigger_margin * 1e3:.0f} mm")
for vy in (0.0, -0.1, -0.2, -0.3):
    s = MomentumState([0.0, 0.08, 0.53], [0.0, vy, 0.0], [0, 0, 0])
    cp = capture_point(s, cfg.com_height, cfg.gravity)
    d = poly.signed_distance(cp)
    print(f"  vy = {vy:5.2f} m/s  capture point y = {cp[1]:.3f}  distance {d * 1e3:6.1f} mm  "
          f"step: {step_trigger(s, poly, cfg.com_height, cfg.trigger_margin, cfg.gravity)}")
