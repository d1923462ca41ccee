"""A diffusion in a drifted Brownian potential, watched at a few times.

With kappa = 0.5 the walker is transient to the right but sub-ballistic: it spends most
of its time stuck at the bottoms of deep valleys. Run: python3 demos/walk_in_a_random_potential.py
"""

import numpy as np

from simlab.diffusion import environment_window, exit_left_probability, simulate_diffusion
from simlab.levy_env import DriftedBrownian

rng = np.random.default_rng(2024)
model = DriftedBrownian(0.5)

env = environment_window(model, 80.0, 0.02, rng)
print(f"environment on [{env.grid[0]:.0f}, {env.grid[-1]:.0f}], V ranges over "
      f"[{env.values.min():.1f}, {env.values.max():.1f}]")
print(f"quenched chance of leaving the window on the left before x = 78: {exit_left_probability(env, 78.0):.3g}")

trace = simulate_diffusion(env, 2000.0, 0.01, rng, record_times=[10, 100, 1000, 2000], stop_levels=[78.0],
                           record_every=100)
for t, lt in zip(trace.record_times, trace.local_time):
    k = np.searchsorted(trace.times, t)
    pos = trace.positions[min(k, trace.positions.size - 1)]
    bottom = trace.lt_grid[np.argmax(lt)]
    print(f"t = {t:6.0f}: X = {pos:6.2f}, most visited point {bottom:6.2f}, max local time {lt.max():8.2f}")

print("occupation check (int L dx / t):", np.round(trace.occupation_ratio(), 4))

# the walker sits near the lowest reachable point of V
reached = env.grid <= trace.positions.max()
print(f"deepest point of V left of the running max: x = {env.grid[reached][np.argmin(env.values[reached])]:.2f}")
