"""Cutting an environment into valleys of depth h and reading off the renewal structure.

Each valley contributes (e_j, S_j, R_j): e_j is the local time at the bottom divided by
the valley's exp-integral, and should be exponential with mean 2 whatever the valley looks like.
"""

import numpy as np
from scipy import stats

from simlab.levy_env import DriftedBrownian, sample_path
from simlab.valleys import RenewalSequence, overshoot_index, scan_h_extrema, standard_valleys, traverse_valleys

rng = np.random.default_rng(7)
model = DriftedBrownian(0.5)
h = 6.0

env = sample_path(model, 3000.0, 0.01, rng)
scan = scan_h_extrema(env, h)
print(f"{scan.minima.size} h-minima and {scan.maxima.size} h-maxima for h = {h} on [0, 3000]")

recs, truncated = standard_valleys(env, h, kappa=model.kappa)
print(f"{len(recs)} standard valleys (list truncated by the window: {truncated})")
for r in recs[:5]:
    print(f"  valley {r.index}: bottom at {r.m:8.2f}, ends at {r.L:8.2f}, S = {r.S:10.3g}, R = {r.R:6.3f}")

_, obs = traverse_valleys(model, 8.0, 300, rng)
e = np.array([o.e for o in obs])
print(f"e_j over {e.size} traversed valleys: mean {e.mean():.3f} (expect 2), "
      f"KS p vs Exp(mean 2) = {stats.kstest(e, 'expon', args=(0, 2)).pvalue:.3f}")

seq = RenewalSequence([o.e for o in obs], [o.S for o in obs], [o.R for o in obs], t=float(np.median([o.S for o in obs])))
for a in (1.0, 10.0, 100.0):
    print(f"first valley whose cumulative e S R / t exceeds {a:5.0f}: {overshoot_index(seq, a)}")
