"""Local time at the hitting time of r, two ways, for kappa = 2.

The maximum of the local time on [0, r] at H(r) has the law of sup Z over [0, r], where
Z(x) = exp(V(x)) R(int_0^x exp(-V)) with R a planar squared Bessel process. The demo also
prints the constants K, m and J that govern the lim inf of the local time.
"""

import numpy as np
from scipy import special, stats

from simlab import gou
from simlab.diffusion import environment_window, ray_knight_local_time
from simlab.levy_env import DriftedBrownian

rng = np.random.default_rng(3)
model = DriftedBrownian(2.0)
r = 5.0

walk = []
for _ in range(1000):
    env = environment_window(model, r + 1, 0.01, rng)
    prof = ray_knight_local_time(env, r, rng)
    walk.append(prof.local_time[(prof.grid >= 0) & (prof.grid <= r)].max())
z = gou.sup_Z_samples(model, r, 1000, rng)
print(f"median of L*+(H(r)): {np.median(walk):.3f}, median of sup Z: {np.median(z):.3f}, "
      f"KS p = {stats.ks_2samp(walk, z).pvalue:.3f}")

K, se = gou.estimate_K(model, 20000, rng)
m = gou.compute_m(model)
print(f"K = {K:.3f} +- {se:.3f} (closed form {2 / special.gamma(2.0):.3f}), m = {m:g}")
print(f"J from the estimate {gou.liminf_constant_J(model, K):.4f}, from the closed form {gou.liminf_constant_J(model, 2.0):.4f}")
print(f"excursion tail plateau 2^k Gamma(k) k^2 K = {gou.tail_plateau_constant(model, 2.0):g}")
