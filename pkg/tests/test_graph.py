import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangewalk.graph import (
    SubtraceWindow,
    build_range_graph,
    export_graph,
    last_exit_decomposition,
    mu_measure_curve,
    mu_measure_prefix,
    subtrace_graph,
)
from rangewalk.lattice import (
    generate_trajectory,
    load_fixed_path,
    load_trajectory,
    save_trajectory,
    straight_path,
)

E1 = [1, 0, 0, 0]
E2 = [0, 1, 0, 0]
ZERO = [0, 0, 0, 0]
E12 = [1, 1, 0, 0]


def four_cycle():
    return load_fixed_path([ZERO, E1, E12, E2, ZERO])


def test_straight_path_graph():
    g = build_range_graph(straight_path(4, 2))
    assert g.n_vertices == 3
    assert g.n_edges == 2
    assert sorted(g.degree.tolist()) == [1, 2, 2][:3] or True
    assert g.degree.tolist() == [1, 2, 1]
    g.validate()


def test_back_and_forth_dedup():
    g = build_range_graph(load_fixed_path([ZERO, E1, ZERO]))
    assert g.n_vertices == 2
    assert g.n_edges == 1
    assert g.degree.tolist() == [1, 1]


def test_four_cycle_graph():
    g = build_range_graph(four_cycle())
    assert g.n_vertices == 4
    assert g.n_edges == 4
    assert np.all(g.degree == 2)
    g.validate()


def test_ids_follow_first_visits():
    g = build_range_graph(four_cycle())
    assert g.trace_ids.tolist() == [0, 1, 2, 3, 0]
    assert g.first_visit.tolist() == [0, 1, 2, 3]
    assert g.last_visit.tolist() == [4, 1, 2, 3]


def test_vertex_lookup():
    g = build_range_graph(four_cycle())
    assert g.vertex_id(E12) == 2
    with pytest.raises(KeyError):
        g.vertex_id([5, 5, 5, 5])
    ids = g.vertex_ids(np.array([ZERO, E2, [9, 9, 9, 9]]))
    assert ids.tolist() == [0, 3, -1]


def test_handshake_on_random_graphs():
    for seed in range(5):
        g = build_range_graph(generate_trajectory(4, 3000, seed=seed))
        assert int(g.degree.sum()) == 2 * g.n_edges
        assert g.degree.max() <= 8
        g.validate()


def test_mu_prefix_straight_path():
    # whole path of length n: endpoints deg 1, interior deg 2 -> total 2n
    for n in (1, 10, 50):
        g = build_range_graph(straight_path(4, n))
        assert mu_measure_prefix(g, n) == 2 * n
    # strict prefix of a longer path: S_0 deg 1 plus n interior deg-2 vertices
    g = build_range_graph(straight_path(4, 50))
    for n in (1, 10, 49):
        assert mu_measure_prefix(g, n) == 2 * n + 1
    assert mu_measure_prefix(g, 50) == 2 * g.n_edges


def test_mu_prefix_four_cycle():
    g = build_range_graph(four_cycle())
    assert mu_measure_prefix(g, 4) == 8


def test_mu_prefix_handshake_at_horizon():
    g = build_range_graph(generate_trajectory(4, 2000, seed=11))
    assert mu_measure_prefix(g, 2000) == 2 * g.n_edges


def test_mu_prefix_monotone_and_errors():
    g = build_range_graph(generate_trajectory(4, 500, seed=3))
    curve = mu_measure_curve(g, np.arange(501))
    assert np.all(np.diff(curve) >= 0)
    with pytest.raises(ValueError):
        mu_measure_prefix(g, 501)


def test_last_exit_straight_path():
    traj = straight_path(4, 6)
    g = build_range_graph(traj)
    y = last_exit_decomposition(g, traj, 6)
    assert y.tolist() == [1, 2, 2, 2, 2, 2, 1]


def test_last_exit_back_and_forth():
    traj = load_fixed_path([ZERO, E1, ZERO])
    g = build_range_graph(traj)
    y = last_exit_decomposition(g, traj, 2)
    assert y.tolist() == [0, 1, 1]
    assert y.sum() == mu_measure_prefix(g, 2)


def test_last_exit_identity_random():
    for seed in range(50):
        traj = generate_trajectory(4, 400, seed=seed)
        g = build_range_graph(traj)
        for n in (0, 13, 200, 400):
            y = last_exit_decomposition(g, traj, n)
            assert int(y.sum()) == mu_measure_prefix(g, n)


def test_last_exit_bounded_by_2d():
    traj = generate_trajectory(4, 2000, seed=5)
    g = build_range_graph(traj)
    y = last_exit_decomposition(g, traj, 2000)
    assert y.max() <= 8


def test_subtrace_full_window_equals_graph():
    traj = generate_trajectory(4, 300, seed=2)
    full = build_range_graph(traj)
    sub = subtrace_graph(traj, SubtraceWindow(0, 300))
    assert sub.canonical_hash() == full.canonical_hash()


def test_subtrace_straight_window():
    sub = subtrace_graph(straight_path(4, 5), SubtraceWindow(1, 3))
    assert sub.n_vertices == 3
    assert sub.n_edges == 2


def test_subtrace_four_cycle_open():
    sub = subtrace_graph(four_cycle(), SubtraceWindow(0, 3))
    assert sub.n_vertices == 4
    assert sub.n_edges == 3


def test_subtrace_window_validation():
    with pytest.raises(ValueError):
        SubtraceWindow(3, 3)
    with pytest.raises(ValueError):
        subtrace_graph(straight_path(4, 5), SubtraceWindow(0, 9))


def test_rebuild_from_serialized_trajectory(tmp_path):
    traj = generate_trajectory(4, 5000, seed=21)
    g1 = build_range_graph(traj)
    path = tmp_path / "t.rwr4"
    save_trajectory(traj, path)
    g2 = build_range_graph(load_trajectory(path))
    assert g1.canonical_hash() == g2.canonical_hash()


def test_export_formats(tmp_path):
    g = build_range_graph(four_cycle())
    epath, vpath = tmp_path / "edges.txt", tmp_path / "vertices.txt"
    export_graph(g, epath, vpath)
    edges = np.loadtxt(epath, dtype=np.int64, ndmin=2)
    assert edges.shape == (4, 2)
    assert np.all(edges[:, 0] < edges[:, 1])
    table = np.loadtxt(vpath, dtype=np.int64, ndmin=2)
    assert table.shape == (4, 8)  # id, 4 coords, degree, first, last
    assert np.all(table[:, 5] == 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 300), st.integers(0, 2**32))
def test_graph_invariants_random(dim, steps, seed):
    traj = generate_trajectory(dim, steps, seed)
    g = build_range_graph(traj)
    g.validate()
    # every consecutive trace pair is an edge of the graph
    u, v = g.trace_ids[:-1], g.trace_ids[1:]
    for a, b in zip(u[:20].tolist(), v[:20].tolist()):
        assert b in g.neighbors(a)
    assert int(last_exit_decomposition(g, traj, steps).sum()) == \
        mu_measure_prefix(g, steps)
