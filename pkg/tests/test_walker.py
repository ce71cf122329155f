import numpy as np
import pytest

from rangewalk.cuts import find_cut_times
from rangewalk.graph import build_range_graph
from rangewalk.lattice import generate_trajectory, load_fixed_path, straight_path
from rangewalk.resistance import oracle_distance_profile
from rangewalk.walker import (
    exact_kernel_small,
    exact_smoothed_kernel,
    exit_time,
    export_heat_kernel_csv,
    export_walk_csv,
    heat_kernel_estimate,
    simulate_walk,
    walk_positions_at,
)

ZERO = [0, 0, 0, 0]
E1 = [1, 0, 0, 0]
E2 = [0, 1, 0, 0]
E12 = [1, 1, 0, 0]


def single_edge_graph():
    return build_range_graph(load_fixed_path([ZERO, E1]))


def four_cycle_graph():
    return build_range_graph(load_fixed_path([ZERO, E1, E12, E2, ZERO]))


def distance_field(graph):
    from scipy.sparse.csgraph import dijkstra
    return dijkstra(graph.adjacency_scipy(), indices=0, unweighted=True)


def test_single_edge_walk_alternates():
    g = single_edge_graph()
    trace = simulate_walk(g, 0, 20, seed=1)
    assert np.array_equal(trace.steps, np.arange(21) % 2)


def test_walk_steps_are_adjacent():
    g = build_range_graph(generate_trajectory(4, 2000, seed=2))
    trace = simulate_walk(g, 0, 5000, seed=3)
    for a, b in zip(trace.steps[:-1].tolist(), trace.steps[1:].tolist()):
        assert b in g.neighbors(a)


def test_walk_deterministic_per_seed():
    g = build_range_graph(generate_trajectory(4, 500, seed=2))
    t1 = simulate_walk(g, 0, 1000, seed=9)
    t2 = simulate_walk(g, 0, 1000, seed=9)
    t3 = simulate_walk(g, 0, 1000, seed=10)
    assert np.array_equal(t1.steps, t2.steps)
    assert not np.array_equal(t1.steps, t3.steps)


def test_interior_path_steps_balanced():
    # from the middle of a long path each step is +-1 with probability 1/2
    g = build_range_graph(straight_path(4, 400))
    trace = simulate_walk(g, 200, 10000, seed=5)
    diffs = np.diff(trace.steps.astype(np.int64))
    up = np.mean(diffs > 0)
    # binomial: sd ~ 0.005 at 10^4 steps
    assert abs(up - 0.5) < 5 * 0.005


def test_invalid_start_rejected():
    g = single_edge_graph()
    with pytest.raises(ValueError):
        simulate_walk(g, 5, 10, seed=1)


def test_four_cycle_return_probability_exact():
    g = four_cycle_graph()
    dist = exact_kernel_small(g, 2, 0)
    assert dist[0] == pytest.approx(0.5)
    assert dist[g.vertex_id(E12)] == pytest.approx(0.5)


def test_exact_kernel_three_path_center():
    g = build_range_graph(load_fixed_path([ZERO, E1, [2, 0, 0, 0]]))
    center = g.vertex_id(E1)
    dist = exact_kernel_small(g, 2, center)
    assert dist[center] == pytest.approx(1.0)


def test_exact_kernel_single_edge_parity():
    g = single_edge_graph()
    dist = exact_kernel_small(g, 7, 0)
    assert dist.tolist() == pytest.approx([0.0, 1.0])


def test_exact_kernel_cap():
    g = build_range_graph(generate_trajectory(4, 5000, seed=1))
    with pytest.raises(ValueError):
        exact_kernel_small(g, 2, 0, cap=100)


def test_heat_kernel_single_edge():
    g = single_edge_graph()
    est = heat_kernel_estimate(g, 1, [1], replicas=50, seed=2)
    # forced alternation: X_1 = far with probability 1, X_2 never
    assert est.values[0] == pytest.approx(0.5)
    assert est.stderr[0] == 0.0


def test_heat_kernel_time_zero_at_origin():
    g = four_cycle_graph()
    est = heat_kernel_estimate(g, 0, [0], replicas=30, seed=3)
    assert est.values[0] == pytest.approx(1.0 / (2 * g.degree[0]))


def test_heat_kernel_normalization_exact():
    g = build_range_graph(generate_trajectory(4, 400, seed=6))
    targets = np.arange(g.n_vertices)
    est = heat_kernel_estimate(g, 16, targets, replicas=400, seed=7)
    total = float(np.sum(est.values * g.degree))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_heat_kernel_matches_exact_within_3se():
    g = four_cycle_graph()
    replicas = 4000
    est = heat_kernel_estimate(g, 6, np.arange(4), replicas=replicas, seed=11)
    exact = exact_smoothed_kernel(g, 6, 0)
    for y in range(4):
        band = 3 * max(est.stderr[y], 1e-4)
        assert abs(est.values[y] - exact[y]) <= band


def test_heat_kernel_reversibility():
    # deg-weighted kernel symmetry: p_n(0, y) ~ p_n(y, 0) within 3 joint SE
    g = build_range_graph(generate_trajectory(4, 60, seed=8))
    y = int(g.trace_ids[10])
    fwd = heat_kernel_estimate(g, 8, [y], replicas=20000, seed=13, start=0)
    bwd = heat_kernel_estimate(g, 8, [0], replicas=20000, seed=14, start=y)
    joint = np.hypot(fwd.stderr[0], bwd.stderr[0])
    assert abs(fwd.values[0] - bwd.values[0]) <= 3 * joint + 1e-12


def test_heat_kernel_validates_replicas():
    with pytest.raises(ValueError):
        heat_kernel_estimate(single_edge_graph(), 1, [0], replicas=0, seed=1)


def test_exit_time_trivial_cases():
    g = build_range_graph(straight_path(4, 50))
    dist = distance_field(g)
    assert exit_time(g, dist, 0.0, seed=1).tau == 0
    s = exit_time(g, dist, 1.0, seed=1)
    assert s.tau == 1 and not s.censored


def test_exit_time_censoring():
    g = build_range_graph(straight_path(4, 50))
    dist = distance_field(g)
    s = exit_time(g, dist, 40.0, seed=1, max_steps=5)
    assert s.censored and s.tau == 5


def test_exit_time_unreachable_radius():
    g = build_range_graph(straight_path(4, 10))
    with pytest.raises(ValueError):
        exit_time(g, distance_field(g), 100.0, seed=1)


def test_exit_time_monotone_coupling():
    g = build_range_graph(generate_trajectory(4, 3000, seed=21))
    traj_dist = distance_field(g)
    for rep in range(10):
        taus = [exit_time(g, traj_dist, r, seed=77, replica=rep).tau
                for r in (2.0, 5.0, 9.0)]
        assert taus[0] <= taus[1] <= taus[2]


def test_exit_time_gambler_ruin_mean():
    # reflected 1-d walk from the end of a path: E tau_r = r^2
    g = build_range_graph(straight_path(4, 80))
    dist = distance_field(g)
    r = 6.0
    taus = np.array([exit_time(g, dist, r, seed=31, replica=k).tau
                     for k in range(3000)], dtype=np.float64)
    se = taus.std() / np.sqrt(taus.shape[0])
    assert abs(taus.mean() - r * r) <= 4 * se


def test_walk_positions_checkpoints_consistent():
    g = build_range_graph(generate_trajectory(4, 800, seed=4))
    pos = walk_positions_at(g, [0, 5, 50, 500], seed=19)
    assert pos[0] == 0
    pos2 = walk_positions_at(g, [0, 5, 50, 500], seed=19)
    assert np.array_equal(pos, pos2)
    with pytest.raises(ValueError):
        walk_positions_at(g, [5, 2], seed=19)


def test_distance_field_matches_profile():
    traj = generate_trajectory(4, 600, seed=9)
    g = build_range_graph(traj)
    cuts = find_cut_times(traj, graph=g)
    field = distance_field(g)
    prof_d = oracle_distance_profile(g, np.arange(601))
    assert np.array_equal(field[g.trace_ids], prof_d)


def test_csv_exports(tmp_path):
    g = four_cycle_graph()
    trace = simulate_walk(g, 0, 5, seed=2)
    export_walk_csv(trace, tmp_path / "walk.csv")
    lines = (tmp_path / "walk.csv").read_text().strip().split("\n")
    assert lines[0] == "step,vertex_id"
    assert len(lines) == 7
    est = heat_kernel_estimate(g, 2, [0, 1], replicas=100, seed=3)
    export_heat_kernel_csv(est, [0.0, 1.0], [0.0, 0.75],
                           tmp_path / "kernel.csv")
    klines = (tmp_path / "kernel.csv").read_text().strip().split("\n")
    assert klines[0] == "target_id,distance,resistance,estimate,stderr"
    assert len(klines) == 3
