"""
Centroidal momentum model and its affine approximation
=======================================================

The state stacks the CoM position, CoM velocity and the angular momentum
about the CoM. The angular rate is bilinear in the contact force and the
CoM position, so the controller expands it around the latest feedback.
This script checks how good that expansion is.
"""

# %%
import numpy as np

from momentum_mpc import ContactGeometry, MomentumState, WrenchPair, discretize, equilibrium_wrench, linearize
from momentum_mpc.momentum_model import exact_momentum_rate

geom = ContactGeometry([0.0, 0.08, 0.0], [0.0, -0.08, 0.0], mass=30.0, gravity=9.81)
com = np.array([0.0, 0.0, 0.53])
state = MomentumState.at_rest(com)

# Standing on both feet: the equilibrium wrench cancels gravity and has no net moment.
f_eq = equilibrium_wrench(geom, com, "double")
print("equilibrium normal forces [N]:", f_eq.left.force[2], f_eq.right.force[2])
print("momentum rate at equilibrium:", np.round(exact_momentum_rate(state, f_eq, geom), 12))

# %%
# Expand around a perturbed operating point and move away from it.
rng = np.random.default_rng(0)
gamma0 = state.as_vector() + np.r_[rng.normal(scale=0.02, size=3), rng.normal(scale=0.1, size=6)]
f0 = f_eq.as_vector() + rng.normal(scale=10, size=12)
model = linearize(MomentumState.from_vector(gamma0), WrenchPair.from_vector(f0), geom)

dx, df = rng.normal(scale=0.05, size=3), rng.normal(scale=20, size=12)
print("\nscale   |affine - exact|   ratio to previous")
prev = None
for scale in (1.0, 0.5, 0.25, 0.125):
    g = gamma0.copy()
    g[:3] += scale * dx
    f = f0 + scale * df
    exact = exact_momentum_rate(MomentumState.from_vector(g), WrenchPair.from_vector(f), geom)
    err = np.linalg.norm(model.rate(g, f) - exact)
    print(f"{scale:6.3f}   {err:.3e}          {'' if prev is None else f'{prev / err:.3f}'}")
    prev = err

# The error is a product of the force and position perturbations, so
# halving both divides it by four.

# %%
# Forward Euler turns the continuous model into the prediction model.
d = discretize(model, 0.01)
print("\ndiscrete model shapes: ev", d.ev.shape, "f", d.f.shape)
controls = np.tile(f0, (25, 1))
traj = d.rollout(gamma0, controls)
print("predicted CoM after 0.25 s:", np.round(traj[-1, :3], 4))
