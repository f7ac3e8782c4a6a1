"""
Where does stepping start?
==========================

Sweep the push magnitude at three angles and record whether the controller
stepped, when it landed and how far the CoM travelled. The threshold sits
between the 40 N and 100 N pushes of the bundled scenarios.
"""

# %%
import numpy as np

from momentum_mpc import load_config, run_scenario

base = load_config("side_push_20deg").replace(**{"simulation.duration": 2.5})
push = base.to_dict()["simulation"]["pushes"][0]

print("angle  magnitude  step  landing  excursion")
for angle in (-20.0, 20.0, 45.0):
    for mag in (40.0, 55.0, 70.0, 85.0, 100.0):
        cfg = base.replace(**{"simulation.pushes": [{**push, "magnitude": mag, "angle_deg": angle}]})
        log = run_scenario(cfg, record_timing=False)
        land = log.landing_time
        print(f"{angle:5.0f}  {mag:9.0f}  {str(log.step_taken):5s} "
              f"{'   -   ' if np.isnan(land) else f'{land:6.2f}s'}  {log.max_transverse_excursion() * 1e3:7.1f} mm")

# The same sweep is available from the command line:
#   momentum-mpc sweep side_push_20deg --push-magnitudes 40,55,70,85,100 --jobs 4
