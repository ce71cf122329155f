"""Simulation of the nearest-neighbor Markov chain on a range graph.

The chain jumps to a uniformly chosen neighbor each step.  Hot loops are
jitted with numba when available; the pure-Python twin implements the
identical xorshift64* stream, so results do not depend on which path runs.
The smoothed two-step kernel is the primary observable since the range
graph is bipartite and the raw kernel oscillates with parity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import RangeGraph
from .seeds import derive_key

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

_U12 = np.uint64(12)
_U25 = np.uint64(25)
_U27 = np.uint64(27)
_U32 = np.uint64(32)
_STAR = np.uint64(0x2545F4914F6CDD1D)
_MASK32 = np.uint64(0xFFFFFFFF)
_ONE = np.uint64(1)


@njit(cache=True)
def _rng_init(seed, replica):
    state = np.uint64(seed) ^ (np.uint64(replica) * np.uint64(0x9E3779B97F4A7C15))
    # one splitmix-style scramble so nearby replicas decorrelate
    state = (state ^ (state >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    state = (state ^ (state >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    state = state ^ (state >> np.uint64(31))
    if state == np.uint64(0):
        state = _ONE
    return state


@njit(cache=True)
def _rng_next(state):
    state ^= state >> _U12
    state ^= state << _U25
    state ^= state >> _U27
    return state, (state * _STAR) >> _U32


@njit(cache=True)
def _bounded(state, n):
    """Exact uniform draw in [0, n) via Lemire rejection on 32-bit words."""
    un = np.uint64(n)
    threshold = (np.uint64(0x100000000)) % un
    while True:
        state, word = _rng_next(state)
        m = word * un
        if (m & _MASK32) >= threshold:
            return state, np.int64(m >> _U32)


@njit(cache=True)
def _walk_trace(indptr, indices, start, steps, seed):
    out = np.empty(steps + 1, dtype=np.int32)
    out[0] = start
    x = np.int64(start)
    state = _rng_init(seed, 0)
    for i in range(steps):
        state, j = _bounded(state, indptr[x + 1] - indptr[x])
        x = indices[indptr[x] + j]
        out[i + 1] = x
    return out


@njit(cache=True)
def _heat_kernel_counts(indptr, indices, start, m, replicas, seed):
    n_vertices = indptr.shape[0] - 1
    counts_m = np.zeros(n_vertices, dtype=np.int64)
    counts_m1 = np.zeros(n_vertices, dtype=np.int64)
    for rep in range(replicas):
        state = _rng_init(seed, rep)
        x = np.int64(start)
        for _ in range(m):
            state, j = _bounded(state, indptr[x + 1] - indptr[x])
            x = indices[indptr[x] + j]
        counts_m[x] += 1
        state, j = _bounded(state, indptr[x + 1] - indptr[x])
        counts_m1[indices[indptr[x] + j]] += 1
    return counts_m, counts_m1


@njit(cache=True)
def _walk_checkpoints(indptr, indices, start, times, seed, replica):
    out = np.empty(times.shape[0], dtype=np.int64)
    x = np.int64(start)
    state = _rng_init(seed, replica)
    t = np.int64(0)
    for i in range(times.shape[0]):
        while t < times[i]:
            state, j = _bounded(state, indptr[x + 1] - indptr[x])
            x = indices[indptr[x] + j]
            t += 1
        out[i] = x
    return out


@njit(cache=True)
def _exit_walk(indptr, indices, dist, start, r, max_steps, seed, replica):
    x = np.int64(start)
    if dist[x] >= r:
        return np.int64(0)
    state = _rng_init(seed, replica)
    for n in range(1, max_steps + 1):
        state, j = _bounded(state, indptr[x + 1] - indptr[x])
        x = indices[indptr[x] + j]
        if dist[x] >= r:
            return np.int64(n)
    return np.int64(-1)


@dataclass
class WalkOnRangeTrace:
    """Vertex-id trace of one walk realisation on the range graph."""
    seed: int
    start: int
    steps: np.ndarray


@dataclass
class HeatKernelEstimate:
    """Monte Carlo estimate of the smoothed kernel p_n(start, targets)."""
    n: int
    targets: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    replicas: int


@dataclass
class ExitTimeSample:
    """First time the walk reaches graph distance >= r from the origin."""
    r: float
    tau: int
    censored: bool


def _check_start(graph: RangeGraph, start: int, moving: bool) -> None:
    if not 0 <= start < graph.n_vertices:
        raise ValueError(f"start vertex {start} outside graph")
    if moving and graph.degree[start] == 0:
        raise ValueError("start vertex has no neighbors")


def simulate_walk(graph: RangeGraph, start: int, steps: int,
                  seed: int) -> WalkOnRangeTrace:
    """Walk `steps` uniform-neighbor jumps from `start`, deterministic per seed."""
    _check_start(graph, start, moving=steps > 0)
    trace = _walk_trace(graph.indptr, graph.indices, start, steps,
                        np.uint64(derive_key(seed, 3)))
    return WalkOnRangeTrace(seed=seed, start=start, steps=trace)


def heat_kernel_estimate(graph: RangeGraph, n: int, targets, replicas: int,
                         seed: int, start: int = 0) -> HeatKernelEstimate:
    """Smoothed transition density at the targets, averaged over replicas.

    p_n(start, y) = [P(X_n = y) + P(X_{n+1} = y)] / (2 deg(y)); the
    occupancy indicator at n and n+1 cannot fire twice (no self-loops),
    so the per-replica contribution is Bernoulli and the quoted standard
    error is the exact binomial one.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    _check_start(graph, start, moving=n > 0 or graph.n_vertices > 1)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    c_m, c_m1 = _heat_kernel_counts(graph.indptr, graph.indices, start, n,
                                    replicas, np.uint64(derive_key(seed, 4)))
    hits = (c_m[targets] + c_m1[targets]).astype(np.float64)
    p = hits / replicas
    deg = graph.degree[targets].astype(np.float64)
    values = p / (2.0 * deg)
    stderr = np.sqrt(p * (1.0 - p) / replicas) / (2.0 * deg)
    return HeatKernelEstimate(n=n, targets=targets, values=values,
                              stderr=stderr, replicas=replicas)


def exact_kernel_small(graph: RangeGraph, n: int, x: int,
                       cap: int = 2000) -> np.ndarray:
    """Exact distribution of X_n from x by iterated transition products."""
    if graph.n_vertices > cap:
        raise ValueError(f"exact kernel capped at {cap} vertices")
    _check_start(graph, x, moving=n > 0 and graph.n_vertices > 1)
    adj = graph.adjacency_scipy()
    inv_deg = 1.0 / np.maximum(graph.degree, 1)
    vec = np.zeros(graph.n_vertices)
    vec[x] = 1.0
    for _ in range(n):
        vec = adj.T @ (vec * inv_deg)
    return vec


def exact_smoothed_kernel(graph: RangeGraph, n: int, x: int,
                          cap: int = 2000) -> np.ndarray:
    """Exact p_n(x, .) for validating the Monte Carlo estimator."""
    dist_n = exact_kernel_small(graph, n, x, cap=cap)
    adj = graph.adjacency_scipy()
    inv_deg = 1.0 / np.maximum(graph.degree, 1)
    dist_n1 = adj.T @ (dist_n * inv_deg)
    return (dist_n + dist_n1) / (2.0 * graph.degree)


def exit_time(graph: RangeGraph, distance_field: np.ndarray, r: float,
              seed: int, start: int = 0, max_steps: int | None = None,
              replica: int = 0) -> ExitTimeSample:
    """First exit from the distance ball of radius r; censored, never faked.

    distance_field holds d(0, v) per vertex (breadth-first from the
    origin).  If the walk does not exit within max_steps the sample comes
    back censored with tau = max_steps.
    """
    if distance_field.shape[0] != graph.n_vertices:
        raise ValueError("distance field size mismatch")
    if r > 0 and distance_field.max() < r:
        raise ValueError(
            f"radius {r} unreachable: graph spans distance {distance_field.max()}")
    _check_start(graph, start, moving=r > 0)
    if max_steps is None:
        max_steps = int(64 * r * r + 1024)
    tau = _exit_walk(graph.indptr, graph.indices, distance_field, start,
                     r, max_steps, np.uint64(derive_key(seed, 5)), replica)
    if tau < 0:
        return ExitTimeSample(r=float(r), tau=max_steps, censored=True)
    return ExitTimeSample(r=float(r), tau=int(tau), censored=False)


def walk_positions_at(graph: RangeGraph, checkpoints, seed: int,
                      start: int = 0, replica: int = 0) -> np.ndarray:
    """Vertex ids of one walk at the given sorted checkpoint times."""
    times = np.asarray(checkpoints, dtype=np.int64)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise ValueError("checkpoints must be sorted and nonnegative")
    _check_start(graph, start, moving=times.size > 0 and times[-1] > 0)
    return _walk_checkpoints(graph.indptr, graph.indices, start, times,
                             np.uint64(derive_key(seed, 6)), replica)


def export_walk_csv(trace: WalkOnRangeTrace, path) -> None:
    with open(path, "w") as fh:
        fh.write("step,vertex_id\n")
        for step, vid in enumerate(trace.steps.tolist()):
            fh.write(f"{step},{vid}\n")


def export_heat_kernel_csv(estimate: HeatKernelEstimate, distances,
                           resistances, path) -> None:
    with open(path, "w") as fh:
        fh.write("target_id,distance,resistance,estimate,stderr\n")
        for t, d, r, v, s in zip(estimate.targets.tolist(), distances,
                                 resistances, estimate.values.tolist(),
                                 estimate.stderr.tolist()):
            fh.write(f"{t},{d},{r},{v!r},{s!r}\n")
