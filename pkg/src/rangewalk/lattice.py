"""Simple random walk trajectories on Z^d with reproducible seeding.

A trajectory is stored as a byte-per-step increment stream (axis + sign),
with lattice points materialized on demand; this keeps walks of 10^7-10^8
steps cheap to hold in memory.  Trajectories are immutable after creation.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .seeds import spawn_rng

#: sentinel written to the cache header for trajectories built from a
#: fixed point list rather than a seeded generator
SYNTHETIC_SEED = (1 << 64) - 1

_MAGIC = b"RWR4"
_VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")  # magic, version, dimension, steps, seed


class Trajectory:
    """An ordered nearest-neighbor lattice path S_0, ..., S_N from the origin.

    Parameters
    ----------
    dimension : int
        Lattice dimension d >= 1.
    increments : uint8 array, shape (N,)
        Per-step direction codes ``2*axis + (1 if positive else 0)``.
    seed : int or None
        Seed of the generating stream; None marks a synthetic path.
    """

    __slots__ = ("dimension", "seed", "increments", "_points")

    def __init__(self, dimension: int, increments: np.ndarray, seed: int | None):
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        increments = np.ascontiguousarray(increments, dtype=np.uint8)
        if increments.size and increments.max(initial=0) >= 2 * dimension:
            raise ValueError("increment code out of range for dimension")
        self.dimension = int(dimension)
        self.seed = seed
        self.increments = increments
        self.increments.setflags(write=False)
        self._points = None

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    def __len__(self) -> int:
        return self.n_steps + 1

    def points(self) -> np.ndarray:
        """Materialize the (N+1, d) array of visited lattice points."""
        if self._points is None:
            self._points = points_from_increments(self.dimension, self.increments)
            self._points.setflags(write=False)
        return self._points

    def point_at(self, k: int) -> np.ndarray:
        return self.points()[k]

    def is_synthetic(self) -> bool:
        return self.seed is None

    def __repr__(self) -> str:
        tag = "synthetic" if self.seed is None else f"seed={self.seed}"
        return f"Trajectory(d={self.dimension}, steps={self.n_steps}, {tag})"


def points_from_increments(dimension: int, increments: np.ndarray) -> np.ndarray:
    """Cumulative positions of an increment stream, origin first.

    Coordinates are int32: |coordinate| <= N < 2^31 always holds for
    unit steps.
    """
    n = increments.shape[0]
    pts = np.zeros((n + 1, dimension), dtype=np.int32)
    if n:
        axis = increments >> 1
        sign = np.where(increments & 1, np.int8(1), np.int8(-1))
        deltas = np.zeros((n, dimension), dtype=np.int8)
        deltas[np.arange(n), axis] = sign
        np.cumsum(deltas, axis=0, dtype=np.int32, out=pts[1:])
    return pts


def generate_trajectory(dimension: int, steps: int, seed: int) -> Trajectory:
    """Simple random walk on Z^d started from the origin.

    Identical (dimension, steps, seed) gives a bit-identical trajectory.
    """
    if dimension < 1:
        raise ValueError(f"dimension must be >= 1, got {dimension}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    rng = spawn_rng(seed, 0)
    increments = rng.integers(0, 2 * dimension, size=steps, dtype=np.uint8)
    return Trajectory(dimension, increments, seed=seed)


def two_sided_trajectory(dimension: int, steps_each_side: int, seed: int):
    """Two independent walks from the origin, on derived seed sub-streams.

    Both halves are reproducible from (dimension, steps_each_side, seed)
    but draw from distinct Philox streams.
    """
    if steps_each_side < 0:
        raise ValueError("steps_each_side must be >= 0")
    halves = []
    for side in (1, 2):
        rng = spawn_rng(seed, side)
        inc = rng.integers(0, 2 * dimension, size=steps_each_side, dtype=np.uint8)
        halves.append(Trajectory(dimension, inc, seed=seed))
    return halves[0], halves[1]


def load_fixed_path(points) -> Trajectory:
    """Wrap an explicit nearest-neighbor point list as a synthetic Trajectory.

    Rejects paths that do not start where they claim or take a non-unit
    step.  The first point fixes the origin offset: paths must start at 0.
    """
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("points must be a (N+1, d) array with at least one row")
    dimension = pts.shape[1]
    if np.any(pts[0] != 0):
        raise ValueError("fixed path must start at the origin")
    diffs = np.diff(pts, axis=0)
    if diffs.size:
        if np.any(np.abs(diffs).sum(axis=1) != 1):
            bad = int(np.nonzero(np.abs(diffs).sum(axis=1) != 1)[0][0])
            raise ValueError(f"non-unit increment at step {bad}")
        axis = np.argmax(diffs != 0, axis=1)
        sign = diffs[np.arange(diffs.shape[0]), axis]
        increments = (2 * axis + (sign > 0)).astype(np.uint8)
    else:
        increments = np.zeros(0, dtype=np.uint8)
    return Trajectory(dimension, increments, seed=None)


def straight_path(dimension: int, steps: int) -> Trajectory:
    """Deterministic self-avoiding control path 0, e1, 2*e1, ..."""
    increments = np.ones(steps, dtype=np.uint8)  # code 1 = +e1
    return Trajectory(dimension, increments, seed=None)


def save_trajectory(traj: Trajectory, path: str | os.PathLike) -> None:
    """Write the binary cache format: RWR4 header + raw increment bytes."""
    seed = SYNTHETIC_SEED if traj.seed is None else traj.seed
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, traj.dimension, traj.n_steps, seed))
        fh.write(traj.increments.tobytes())


def load_trajectory(path: str | os.PathLike) -> Trajectory:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"truncated trajectory file: {path}")
        magic, version, dimension, steps, seed = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"bad magic in trajectory file: {path}")
        if version != _VERSION:
            raise ValueError(f"unsupported trajectory file version {version}")
        raw = fh.read(steps)
        if len(raw) != steps:
            raise ValueError(f"truncated increment stream: {path}")
    increments = np.frombuffer(raw, dtype=np.uint8)
    return Trajectory(dimension, increments,
                      seed=None if seed == SYNTHETIC_SEED else seed)
