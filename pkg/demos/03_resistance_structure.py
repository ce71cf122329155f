"""Resistance and distance profiles, balls, and covering numbers.

Between consecutive cut times the trace forms a block; consecutive blocks
share exactly the cut vertex, so both the effective resistance and the
graph distance from the origin add up block by block.  The blockwise
profile is checked here against a whole-graph Laplacian factorization,
and the resistance balls built from the same block structure feed the
across-ball resistance and the greedy covering check.
"""

import numpy as np

from rangewalk import (
    build_range_graph,
    covering_number,
    decompose_blocks,
    find_cut_times,
    metric_profile,
    past_max_deviation,
    resistance_across_ball,
    resistance_ball,
)
from rangewalk.lattice import generate_trajectory
from rangewalk.resistance import oracle_resistance_profile

traj = generate_trajectory(dimension=4, steps=20_000, seed=3)
graph = build_range_graph(traj)
cuts = find_cut_times(traj, graph=graph)
dec = decompose_blocks(cuts)
sizes = dec.ends - dec.starts
print(f"{dec.n_blocks} blocks; mean gap {sizes.mean():.2f}, "
      f"max gap {sizes.max()}")

grid = np.arange(0, traj.n_steps + 1, 97)
prof = metric_profile(graph, cuts, grid=grid)
oracle = oracle_resistance_profile(graph, grid)
gap = np.max(np.abs(prof.resistance - oracle) / np.maximum(oracle, 1.0))
print(f"blockwise vs whole-graph oracle: max relative gap {gap:.2e}")
print(f"resistance <= distance everywhere: "
      f"{bool(np.all(prof.resistance <= prof.distance + 1e-9))}")
print(f"endpoint: R/n = {prof.resistance[-1] / traj.n_steps:.4f}, "
      f"d/n = {prof.distance[-1] / traj.n_steps:.4f}")

dev = past_max_deviation(prof)
print(f"past-maximum deviation: R {dev['resistance']:.1f}, "
      f"d {dev['distance']:.1f} (bounded by the worst cut gap)")

for radius in (10.0, 40.0, 160.0):
    ball = resistance_ball(graph, cuts, radius)
    across = resistance_across_ball(graph, radius, cuts)
    cover = covering_number(graph, cuts, radius)
    print(f"r = {radius:5.0f}: |B(0,r)| = {ball.members.size:6d}, "
          f"cut vertices inside = {ball.cut_vertex_count:5d}, "
          f"R(0, B^c) = {across:7.2f}, greedy 2r/3-cover size = {cover}")
