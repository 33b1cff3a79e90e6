"""
Plants, flows, and the braking barrier
======================================

Steps the two registered plants, shows the barrier/distance pair for the
disk obstacle, and sweeps the recovery law's descent property.
"""

import numpy as np

from mpcmci import (
    make_double_integrator,
    make_unicycle,
    simulate,
    step,
    unicycle_safety,
    check_cbf_descent,
    check_compatibility,
    sample_states,
)
from mpcmci.safety import default_unicycle_region

# the unicycle advances along its heading; zero input keeps v and omega fixed
plant = make_unicycle()
x = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
print("one step at v=1, zero input:", step(plant, x, np.zeros(2)))

# the double integrator realises the exact closed forms x+ = x + v + u/2
dblint = make_double_integrator(velocity_bound=False)
print("double-integrator flow:", simulate(dblint, [0.1, -0.7], [[1.5], [0.0]]))

# distance is geometric; the barrier subtracts the braking distance v^2/(2 a_m)
safety = unicycle_safety(plant)
on_loop = np.array([1.1, 0.0, 0.0, 0.69, 0.0])
print(f"on the r=1.1 loop at v=0.69: d = {safety.distance(on_loop):+.3f}, "
      f"h = {safety.barrier(on_loop):+.3f}  (safe by distance, unsafe by barrier)")

# the recovery law brakes without steering; h never decreases under it
states = sample_states(default_unicycle_region(), 10_000, seed=0)
descent = check_cbf_descent(safety, plant, states, tol=1e-9)
compat = check_compatibility(safety, states, tol=1e-9)
print(f"descent sweep: {descent.samples_tested} samples, "
      f"{len(descent.violations)} violations (max measure {descent.max_descent_violation:.2e})")
print(f"compatibility sweep: {len(compat.violations)} violations "
      f"(h >= 0 implies d >= 0 everywhere)")
