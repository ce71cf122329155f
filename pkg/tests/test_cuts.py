import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangewalk.cuts import (
    CutTimeSet,
    GapStats,
    WindowedIndicatorConfig,
    brute_force_cut_times,
    count_curve,
    count_cut_times,
    default_buffer,
    export_cuts_csv,
    find_cut_times,
    gap_statistics,
    windowed_cut_indicator,
)
from rangewalk.graph import build_range_graph
from rangewalk.lattice import generate_trajectory, load_fixed_path, straight_path

ZERO = [0, 0, 0, 0]
E1 = [1, 0, 0, 0]
E2 = [0, 1, 0, 0]
E12 = [1, 1, 0, 0]


def test_straight_path_all_cut():
    cuts = find_cut_times(straight_path(4, 3))
    assert cuts.times.tolist() == [0, 1, 2]


def test_back_and_forth_no_cut():
    cuts = find_cut_times(load_fixed_path([ZERO, E1, ZERO]))
    assert cuts.times.tolist() == []


def test_four_cycle_no_cut():
    cuts = find_cut_times(load_fixed_path([ZERO, E1, E12, E2, ZERO]))
    assert cuts.times.tolist() == []


def test_brute_force_matches_fixtures():
    assert brute_force_cut_times(straight_path(4, 3)).times.tolist() == [0, 1, 2]
    assert brute_force_cut_times(
        load_fixed_path([ZERO, E1, ZERO])).times.tolist() == []
    assert brute_force_cut_times(
        load_fixed_path([ZERO, E1, E12, E2, ZERO])).times.tolist() == []


def test_brute_force_cap():
    with pytest.raises(ValueError):
        brute_force_cut_times(straight_path(1, 10**4 + 1))


def test_oracle_equivalence_small():
    for seed in range(30):
        traj = generate_trajectory(4, 500, seed=seed)
        fast = find_cut_times(traj)
        slow = brute_force_cut_times(traj)
        assert np.array_equal(fast.times, slow.times)


def test_oracle_equivalence_low_dim():
    # d=1 and d=2 walks recur constantly: sparse/empty cut sets
    for dim in (1, 2, 3):
        for seed in range(10):
            traj = generate_trajectory(dim, 300, seed=seed)
            assert np.array_equal(find_cut_times(traj).times,
                                  brute_force_cut_times(traj).times)


def test_graph_reuse_matches():
    traj = generate_trajectory(4, 2000, seed=3)
    g = build_range_graph(traj)
    assert np.array_equal(find_cut_times(traj, graph=g).times,
                          find_cut_times(traj).times)


def test_cut_times_strictly_increasing_validation():
    with pytest.raises(ValueError):
        CutTimeSet(horizon=10, times=np.array([3, 3]), buffer=1)


def test_count_cut_times():
    cuts = find_cut_times(straight_path(4, 5))
    assert count_cut_times(cuts, 3) == 4  # times 0,1,2,3
    assert count_cut_times(cuts, 0) == 1
    empty = CutTimeSet(horizon=10, times=np.array([], dtype=np.int64), buffer=1)
    assert count_cut_times(empty, 10) == 0
    curve = count_curve(cuts, np.arange(6))
    assert np.all(np.diff(curve) >= 0)


def test_counting_identity_t_indexing():
    # T_{N_n} <= n < T_{N_n + 1} whenever both sides exist
    traj = generate_trajectory(4, 3000, seed=8)
    cuts = find_cut_times(traj)
    t = cuts.times
    for n in (10, 100, 1500, 2999):
        m = count_cut_times(cuts, n)
        if m > 0:
            assert t[m - 1] <= n
        if m < len(t):
            assert t[m] > n


def test_windowed_indicator_straight():
    traj = straight_path(4, 10)
    cfg = WindowedIndicatorConfig(window=3)
    for k in range(3, 7):
        assert windowed_cut_indicator(traj, k, cfg)


def test_windowed_indicator_blocked_at_origin():
    # [0, e1, 0, e1, 2e1, 3e1, 4e1]: k=0 fails for window 2 (0 revisited)
    pts = [ZERO, E1, ZERO, E1, [2, 0, 0, 0], [3, 0, 0, 0], [4, 0, 0, 0]]
    traj = load_fixed_path(pts)
    assert not windowed_cut_indicator(traj, 0, WindowedIndicatorConfig(2))


def test_windowed_superset_of_cut():
    # every detected cut time has a true windowed indicator, all windows
    traj = generate_trajectory(4, 800, seed=11)
    cuts = find_cut_times(traj)
    for k in cuts.times.tolist()[:40]:
        for b in (1, 4, 16):
            if k + b <= traj.n_steps:
                assert windowed_cut_indicator(traj, k,
                                              WindowedIndicatorConfig(b))


def test_windowed_overflow_errors():
    traj = straight_path(4, 10)
    with pytest.raises(ValueError):
        windowed_cut_indicator(traj, 9, WindowedIndicatorConfig(5))
    with pytest.raises(ValueError):
        windowed_cut_indicator(traj, 10, WindowedIndicatorConfig(1))


def test_window_presets():
    assert WindowedIndicatorConfig.log_preset(2000).window == 1
    big = WindowedIndicatorConfig.loglog_preset(1000, 2.0)
    assert 1 <= big.window <= 1000
    with pytest.raises(ValueError):
        WindowedIndicatorConfig(0)


def test_gap_statistics_straight():
    cuts = find_cut_times(straight_path(4, 5))
    stats = gap_statistics(cuts, 4)
    assert stats == GapStats(max_gap=1, tail_gap=0)


def test_gap_statistics_fixture():
    cuts = CutTimeSet(horizon=20, times=np.array([0, 10, 11]), buffer=1)
    stats = gap_statistics(cuts, 15)
    assert stats.max_gap == 10
    assert stats.tail_gap == 4


def test_gap_statistics_errors_and_single():
    cuts = CutTimeSet(horizon=20, times=np.array([7]), buffer=1)
    with pytest.raises(ValueError):
        gap_statistics(cuts, 5)
    stats = gap_statistics(cuts, 12)
    assert stats.max_gap == 0 and stats.tail_gap == 5


def test_provisional_flagging():
    cuts = CutTimeSet(horizon=100, times=np.array([5, 50, 96, 99]), buffer=5)
    assert cuts.provisional_mask.tolist() == [False, False, True, True]
    assert cuts.confirmed_times.tolist() == [5, 50]


def test_default_buffer_values():
    assert default_buffer(1) == 1
    assert default_buffer(2000) == 1
    assert 1 <= default_buffer(50) <= 50


def test_csv_export(tmp_path):
    cuts = CutTimeSet(horizon=10, times=np.array([0, 3, 9]), buffer=2)
    path = tmp_path / "cuts.csv"
    export_cuts_csv(cuts, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "k,provisional"
    assert lines[1:] == ["0,0", "3,0", "9,1"]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 250))
def test_prefix_superset_property(seed, steps):
    # horizon cut times of the full path, restricted below a prefix horizon,
    # are a subset of the prefix's cut times: future only removes cut times
    traj = generate_trajectory(4, steps, seed)
    m = max(1, steps // 2)
    prefix = load_fixed_path(traj.points()[:m + 1])
    full = set(find_cut_times(traj).times.tolist())
    pre = set(find_cut_times(prefix).times.tolist())
    assert {k for k in full if k < m} <= pre


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 200), st.integers(1, 4))
def test_oracle_equivalence_property(seed, steps, dim):
    traj = generate_trajectory(dim, steps, seed)
    assert np.array_equal(find_cut_times(traj).times,
                          brute_force_cut_times(traj).times)
