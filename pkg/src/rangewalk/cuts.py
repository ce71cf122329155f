"""Cut-time detection and gap statistics for lattice trajectories.

A time k < N is a (horizon) cut time when the past trace S_[0,k] and the
strict future S_[k+1,N] are disjoint.  The detector runs in linear time:
k fails to be a cut time exactly when some vertex x is visited both at or
before k and after k, i.e. k lies in [first_visit(x), last_visit(x) - 1];
the union of these intervals is accumulated with a difference array and
cut times are the uncovered k.  Times close to the horizon are flagged
provisional because the unseen future could still disqualify them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import RangeGraph, _dedup_points, _row_keys
from .lattice import Trajectory


def default_buffer(horizon: int) -> int:
    """Horizon buffer b = ceil(N / (log N)^6), clamped into [1, N]."""
    if horizon <= 1:
        return horizon
    raw = horizon / math.log(horizon) ** 6
    return int(min(horizon, max(1, math.ceil(raw))))


@dataclass
class CutTimeSet:
    """Sorted horizon cut times with a provisional zone near the horizon."""
    horizon: int
    times: np.ndarray
    buffer: int

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("cut times must be strictly increasing")

    @property
    def provisional_mask(self) -> np.ndarray:
        """True for times in (N - b, N) whose status may still change."""
        return self.times > self.horizon - self.buffer

    @property
    def confirmed_times(self) -> np.ndarray:
        return self.times[~self.provisional_mask]

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class GapStats:
    """Largest gap between consecutive cut times up to n, plus tail gap."""
    max_gap: int
    tail_gap: int


@dataclass(frozen=True)
class WindowedIndicatorConfig:
    """Window half-width b for the localized cut indicator."""
    window: int

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @classmethod
    def log_preset(cls, n: int, exponent: float = -6.0):
        """b_n = n (log n)^exponent, clamped into [1, n]."""
        raw = n * math.log(max(n, 3)) ** exponent
        return cls(int(min(n, max(1, round(raw)))))

    @classmethod
    def loglog_preset(cls, n: int, r: float):
        """b = floor(n (log log n)^r), clamped into [1, n]."""
        raw = n * math.log(math.log(max(n, 16))) ** r
        return cls(int(min(n, max(1, math.floor(raw)))))


def _cut_times_from_visits(n: int, first: np.ndarray, last: np.ndarray,
                           buffer: int | None) -> CutTimeSet:
    mask = last > first
    diff = (np.bincount(first[mask], minlength=n + 1)
            - np.bincount(last[mask], minlength=n + 1))
    coverage = np.cumsum(diff[:n])
    times = np.flatnonzero(coverage == 0).astype(np.int64)
    b = default_buffer(n) if buffer is None else buffer
    return CutTimeSet(horizon=n, times=times, buffer=b)


def find_cut_times(traj: Trajectory, graph: RangeGraph | None = None,
                   buffer: int | None = None) -> CutTimeSet:
    """All horizon cut times of the trajectory, in linear time.

    Pass the already-built range graph to reuse its first/last visit
    tables; otherwise they are recomputed from the points.
    """
    n = traj.n_steps
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if graph is not None:
        return _cut_times_from_visits(n, graph.first_visit, graph.last_visit,
                                      buffer)
    _, first, last = _dedup_points(traj.points())
    return _cut_times_from_visits(n, first, last, buffer)


def find_cut_times_from_graph(graph: RangeGraph,
                              buffer: int | None = None) -> CutTimeSet:
    """Cut times recovered from a built graph's visit tables alone."""
    n = graph.horizon
    if n < 1:
        raise ValueError("horizon must be >= 1")
    return _cut_times_from_visits(n, graph.first_visit, graph.last_visit,
                                  buffer)


def brute_force_cut_times(traj: Trajectory,
                          buffer: int | None = None) -> CutTimeSet:
    """Quadratic-work oracle: materialize past/future occupancy per time.

    Builds, for every k, boolean membership of each vertex in S_[0,k] and
    in S_[k+1,N] and intersects them explicitly.  Guarded to N <= 10^4.
    """
    n = traj.n_steps
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if n > 10**4:
        raise ValueError(f"brute-force oracle capped at N = 10^4, got {n}")
    ids, _, _ = _dedup_points(traj.points())
    n_vertices = int(ids.max()) + 1
    onehot = np.zeros((n + 1, n_vertices), dtype=bool)
    onehot[np.arange(n + 1), ids] = True
    past = np.logical_or.accumulate(onehot, axis=0)
    future = np.logical_or.accumulate(onehot[::-1], axis=0)[::-1]
    conflict = np.any(past[:-1] & future[1:], axis=1)
    times = np.flatnonzero(~conflict).astype(np.int64)
    b = default_buffer(n) if buffer is None else buffer
    return CutTimeSet(horizon=n, times=times, buffer=b)


def count_cut_times(cuts: CutTimeSet, n: int) -> int:
    """Number of cut times T_i <= n (the counting process N_n)."""
    return int(np.searchsorted(cuts.times, n, side="right"))


def count_curve(cuts: CutTimeSet, ns: np.ndarray) -> np.ndarray:
    return np.searchsorted(cuts.times, np.asarray(ns), side="right")


def windowed_cut_indicator(traj: Trajectory, k: int,
                           config: WindowedIndicatorConfig) -> bool:
    """Localized cut indicator: windowed past and future traces disjoint.

    The past window is clamped at time 0; a future window reaching past
    the horizon is an error since the indicator would be unverifiable.
    """
    b = config.window
    n = traj.n_steps
    if not 0 <= k < n:
        raise ValueError(f"time {k} outside [0, {n})")
    if k + b > n:
        raise ValueError(f"future window [{k+1}, {k+b}] overflows horizon {n}")
    pts = traj.points()
    past = pts[max(0, k - b):k + 1].astype(np.int64)
    future = pts[k + 1:k + b + 1].astype(np.int64)
    keys, spec = _row_keys(np.concatenate([past, future]))
    return not np.intersect1d(keys[:len(past)], keys[len(past):]).size


def gap_statistics(cuts: CutTimeSet, n: int) -> GapStats:
    """Max consecutive cut gap over {i >= 2 : T_i <= n} and tail gap n - T_(n)."""
    m = count_cut_times(cuts, n)
    if m == 0:
        raise ValueError(f"no cut times at or before n = {n}")
    upto = cuts.times[:m]
    max_gap = int(np.diff(upto).max()) if m >= 2 else 0
    return GapStats(max_gap=max_gap, tail_gap=int(n - upto[-1]))


def export_cuts_csv(cuts: CutTimeSet, path) -> None:
    """CSV export: one row per cut time with its provisional flag."""
    prov = cuts.provisional_mask.astype(np.int64)
    with open(path, "w") as fh:
        fh.write("k,provisional\n")
        for t, p in zip(cuts.times.tolist(), prov.tolist()):
            fh.write(f"{t},{p}\n")
