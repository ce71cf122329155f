"""Detect cut times, compare detectors, and look at gap statistics.

A time k is a cut time when the past and strict future traces are
disjoint; the range graph then pinches to a single vertex there.  The
linear-time detector unions the per-vertex intervals [first visit,
last visit) with a difference array; the quadratic oracle materializes
past/future occupancy per time and intersects them explicitly.
"""

import numpy as np

from rangewalk import brute_force_cut_times, find_cut_times, gap_statistics
from rangewalk.cuts import WindowedIndicatorConfig, windowed_cut_indicator
from rangewalk.lattice import generate_trajectory

traj = generate_trajectory(dimension=4, steps=8000, seed=11)

fast = find_cut_times(traj)
slow = brute_force_cut_times(traj)
assert np.array_equal(fast.times, slow.times), "detector mismatch!"

n = traj.n_steps
print(f"cut times found: {len(fast)} of {n} times "
      f"({len(fast) / n:.3f} per step)")
print(f"first ten: {fast.times[:10].tolist()}")
print(f"provisional near the horizon (buffer {fast.buffer}): "
      f"{int(fast.provisional_mask.sum())}")

stats = gap_statistics(fast, n)
print(f"max gap between cut times: {stats.max_gap}; "
      f"tail gap to horizon: {stats.tail_gap}")

# every detected cut time passes the windowed indicator at any window
cfg = WindowedIndicatorConfig(window=64)
inner = [k for k in fast.times.tolist() if k + cfg.window <= n]
checked = inner[:200]
assert all(windowed_cut_indicator(traj, k, cfg) for k in checked)
print(f"windowed indicator agrees on {len(checked)} cut times (window 64)")

# the cut-count process N_n against the predicted n (log n)^(-1/2) shape
for m in (1000, 2000, 4000, 8000):
    count = int(np.searchsorted(fast.times, m, side="right"))
    print(f"N_{m} = {count:5d}   N/m = {count / m:.4f}   "
          f"N/(m (log m)^-0.5) = {count / (m * np.log(m) ** -0.5):.4f}")
