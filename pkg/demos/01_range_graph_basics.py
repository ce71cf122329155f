"""Build the range graph of a lattice walk and inspect its volume measure.

The range graph keeps one vertex per visited site and one edge per
traversed bond, however many times the walk crosses it.  The degree
measure mu is the invariant measure of the walk on the range, and it
decomposes exactly over last-exit times: summing, for every time k that
is the final visit to its site, the number of distinct edges seen at that
site up to step k reproduces mu of the visited set.  This identity is the
backbone of the volume-growth estimator, so we check it here by hand.
"""

import numpy as np

from rangewalk import (
    build_range_graph,
    generate_trajectory,
    last_exit_decomposition,
    mu_measure_prefix,
)

traj = generate_trajectory(dimension=4, steps=50_000, seed=7)
graph = build_range_graph(traj)

print(f"trajectory: {traj}")
print(f"range graph: {graph.n_vertices} vertices, {graph.n_edges} edges")
print(f"max degree: {graph.degree.max()} (lattice bound {2 * traj.dimension})")
print(f"handshake: sum(deg) = {int(graph.degree.sum())} = 2|E| = "
      f"{2 * graph.n_edges}")

for n in (1000, 10_000, 50_000):
    mu = mu_measure_prefix(graph, n)
    y = last_exit_decomposition(graph, traj, n)
    print(f"mu(S[0,{n}]) = {mu:7d}   sum of last-exit terms = {int(y.sum()):7d}"
          f"   mu/n = {mu / n:.4f}")

# the ratio mu/n is the volume-growth constant estimator; each last-exit
# term is at most 2d
y_full = last_exit_decomposition(graph, traj, traj.n_steps)
print(f"last-exit terms range: 0..{int(y_full.max())}")
print(f"fraction of times that are last visits: "
      f"{np.mean(y_full > 0):.3f}")
