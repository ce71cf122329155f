"""Range graph of a lattice trajectory: vertices, deduplicated edges, degrees.

The builder is fully vectorized: points are deduplicated through a packed
integer key (or a lexicographic sort when coordinates are too spread to
pack into 64 bits), vertex ids are assigned in first-visit order so they
are trajectory-stable, and the adjacency is stored in CSR form.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import Trajectory


@dataclass(frozen=True)
class SubtraceWindow:
    """Trajectory time window [m, n] selecting the subtrace graph."""
    m: int
    n: int

    def __post_init__(self):
        if not 0 <= self.m < self.n:
            raise ValueError(f"invalid window ({self.m}, {self.n})")


class RangeGraph:
    """Deduplicated trace graph of a trajectory, ids in first-visit order.

    Attributes
    ----------
    coords : (V, d) int32 array of vertex lattice coordinates
    indptr, indices : CSR adjacency (symmetric, sorted neighbor lists)
    first_visit, last_visit : per-vertex trajectory times
    trace_ids : (N+1,) vertex id of every trajectory step
    """

    def __init__(self, dimension, coords, indptr, indices, first_visit,
                 last_visit, trace_ids):
        self.dimension = int(dimension)
        self.coords = coords
        self.indptr = indptr
        self.indices = indices
        self.first_visit = first_visit
        self.last_visit = last_visit
        self.trace_ids = trace_ids
        self._lookup = None
        self._mu_curve = None

    @property
    def n_vertices(self) -> int:
        return self.coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.indices.shape[0] // 2

    @property
    def horizon(self) -> int:
        return self.trace_ids.shape[0] - 1

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edges(self) -> np.ndarray:
        """(E, 2) array of undirected edges with u < v."""
        src = np.repeat(np.arange(self.n_vertices, dtype=np.int64),
                        np.diff(self.indptr))
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def adjacency_scipy(self) -> sp.csr_matrix:
        data = np.ones(self.indices.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.n_vertices, self.n_vertices))

    def vertex_id(self, point) -> int:
        """Dense id of a lattice point; raises KeyError if unvisited."""
        ids = self.vertex_ids(np.asarray(point, dtype=np.int64)[None, :])
        if ids[0] < 0:
            raise KeyError(f"point {tuple(point)} not in graph")
        return int(ids[0])

    def vertex_ids(self, points: np.ndarray) -> np.ndarray:
        """Vectorized point -> id lookup; -1 for points outside the graph."""
        points = np.asarray(points, dtype=np.int64)
        if self._lookup is None:
            keys, spec = _row_keys(self.coords.astype(np.int64))
            if keys is None:
                self._lookup = {tuple(row): i
                                for i, row in enumerate(self.coords.tolist())}
            else:
                order = np.argsort(keys, kind="stable")
                self._lookup = (keys[order], order, spec)
        if isinstance(self._lookup, dict):
            return np.array([self._lookup.get(tuple(row), -1)
                             for row in points.tolist()], dtype=np.int64)
        sorted_keys, order, spec = self._lookup
        lo, span, _ = spec
        inside = np.all((points >= lo) & (points - lo <= span), axis=1)
        qkeys = _apply_key_spec(np.where(inside[:, None], points, lo), spec)
        pos = np.searchsorted(sorted_keys, qkeys)
        pos = np.minimum(pos, sorted_keys.shape[0] - 1)
        hit = inside & (sorted_keys[pos] == qkeys)
        out = np.where(hit, order[pos], -1)
        return out.astype(np.int64)

    def canonical_hash(self) -> str:
        """SHA-256 over the canonical serialization (id-order stable)."""
        h = hashlib.sha256()
        h.update(np.int64([self.dimension, self.horizon]).tobytes())
        for arr in (self.coords, self.indptr, self.indices,
                    self.first_visit, self.last_visit, self.trace_ids):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def validate(self) -> None:
        """Assert the structural invariants; cheap enough for tests."""
        deg = self.degree
        if deg.size and self.n_edges:
            assert deg.min() >= 1 and deg.max() <= 2 * self.dimension
        assert deg.sum() == 2 * self.n_edges
        # symmetry: CSR built from both edge directions, spot-check via transpose
        a = self.adjacency_scipy()
        assert (a != a.T).nnz == 0


def _row_keys(pts: np.ndarray):
    """Pack integer rows into sortable scalar keys.

    Returns (keys, spec); spec is reused to pack query points the same way.
    Falls back to a void view of the raw rows when the coordinate spread
    does not fit 63 bits.
    """
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    bits = np.ceil(np.log2(span + 2)).astype(np.int64)
    if bits.sum() <= 63:
        shifts = np.concatenate([np.cumsum(bits[::-1])[-2::-1], [0]])
        spec = (lo, span, shifts)
        return _apply_key_spec(pts, spec), spec
    return None, None


def _apply_key_spec(pts: np.ndarray, spec) -> np.ndarray:
    lo, _, shifts = spec
    return ((pts - lo) << shifts).sum(axis=1)


def _dedup_points(pts: np.ndarray):
    """First-visit-ordered deduplication of trajectory points.

    Returns (ids, first_visit, last_visit) with ids[k] the dense id of
    point k; id order follows first visits so ids are trajectory-stable.
    """
    n = pts.shape[0]
    keys, _ = _row_keys(pts.astype(np.int64))
    if keys is not None:
        order = np.argsort(keys, kind="stable")
        sk = keys[order]
        new_group = np.empty(n, dtype=bool)
        new_group[0] = True
        np.not_equal(sk[1:], sk[:-1], out=new_group[1:])
    else:
        order = np.lexsort(pts.T[::-1])
        spts = pts[order]
        new_group = np.empty(n, dtype=bool)
        new_group[0] = True
        np.any(spts[1:] != spts[:-1], axis=1, out=new_group[1:])
    group_key_order = np.cumsum(new_group) - 1
    starts = np.flatnonzero(new_group)
    ends = np.r_[starts[1:], n] - 1
    # stable sort: first/last element of each group is the min/max time
    first_key_order = order[starts]
    last_key_order = order[ends]
    rank_order = np.argsort(first_key_order, kind="stable")
    rank = np.empty(rank_order.shape[0], dtype=np.int64)
    rank[rank_order] = np.arange(rank_order.shape[0])
    g_key = np.empty(n, dtype=np.int64)
    g_key[order] = group_key_order
    ids = rank[g_key].astype(np.int32)
    first_visit = first_key_order[rank_order]
    last_visit = last_key_order[rank_order]
    return ids, first_visit, last_visit


def _build_from_points(points: np.ndarray, dimension: int) -> RangeGraph:
    ids, first_visit, last_visit = _dedup_points(points)
    n_vertices = first_visit.shape[0]
    coords = points[first_visit].astype(np.int32)
    u = ids[:-1].astype(np.int64)
    v = ids[1:].astype(np.int64)
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    ekey = np.unique(lo << np.int64(32) | hi)
    elo = (ekey >> np.int64(32)).astype(np.int32)
    ehi = (ekey & np.int64(0xFFFFFFFF)).astype(np.int32)
    src = np.concatenate([elo, ehi])
    dst = np.concatenate([ehi, elo])
    order = np.lexsort((dst, src))
    indices = dst[order]
    counts = np.bincount(src, minlength=n_vertices)
    indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return RangeGraph(dimension, coords, indptr, indices, first_visit,
                      last_visit, ids)


def build_range_graph(traj: Trajectory) -> RangeGraph:
    """Range graph of the full trajectory; repeat traversals give one edge."""
    return _build_from_points(traj.points(), traj.dimension)


def subtrace_graph(traj: Trajectory, window: SubtraceWindow) -> RangeGraph:
    """Graph of the windowed trace S_m, ..., S_n only."""
    if window.n > traj.n_steps:
        raise ValueError(f"window end {window.n} beyond horizon {traj.n_steps}")
    return _build_from_points(traj.points()[window.m:window.n + 1],
                              traj.dimension)


def mu_measure_prefix(graph: RangeGraph, n: int) -> int:
    """Degree measure of the set of vertices visited by time n.

    Sums full-graph degrees over the distinct vertices of S_[0,n];
    monotone nondecreasing in n and equal to 2|E| at the horizon.
    """
    return int(mu_measure_curve(graph, np.asarray([n]))[0])


def mu_measure_curve(graph: RangeGraph, ns: np.ndarray) -> np.ndarray:
    """Vectorized mu_measure_prefix over an array of times."""
    ns = np.asarray(ns)
    if ns.size and (ns.min() < 0 or ns.max() > graph.horizon):
        raise ValueError("time beyond trajectory horizon")
    if graph._mu_curve is None:
        # first_visit is increasing by construction (ids in first-visit order)
        fv = graph.first_visit
        csum = np.cumsum(graph.degree, dtype=np.int64)
        graph._mu_curve = (fv, csum)
    fv, csum = graph._mu_curve
    idx = np.searchsorted(fv, ns, side="right")
    out = np.zeros(ns.shape, dtype=np.int64)
    np.copyto(out, csum[idx - 1], where=idx > 0)
    return out


def _edge_first_steps(graph: RangeGraph):
    """Distinct edges with the step index of their first traversal."""
    u = graph.trace_ids[:-1].astype(np.int64)
    v = graph.trace_ids[1:].astype(np.int64)
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    ekey, estep = np.unique(lo << np.int64(32) | hi, return_index=True)
    return (ekey >> np.int64(32)), (ekey & np.int64(0xFFFFFFFF)), estep


def last_exit_decomposition(graph: RangeGraph, traj: Trajectory,
                            n: int) -> np.ndarray:
    """Per-time last-exit volume contributions Y_k for the prefix S_[0,n].

    Y_k counts the distinct edges incident to S_k among the steps up to
    min(k, N-1) when k is the final visit to S_k within the horizon and
    S_k was already visited by time n; otherwise Y_k = 0.  Summed over k
    this reproduces mu_measure_prefix(graph, n) exactly.
    """
    N = graph.horizon
    if not 0 <= n <= N:
        raise ValueError(f"time {n} beyond horizon {N}")
    eu, ev, estep = _edge_first_steps(graph)
    vert = np.concatenate([eu, ev])
    ftime = np.concatenate([estep, estep])
    big = np.int64(N + 2)
    combined = np.sort(vert * big + ftime)
    ks = np.arange(N + 1, dtype=np.int64)
    x = graph.trace_ids.astype(np.int64)
    cap = np.minimum(ks, N - 1)
    lo = np.searchsorted(combined, x * big)
    hi = np.searchsorted(combined, x * big + cap + 1)
    counts = hi - lo
    live = (graph.last_visit[x] == ks) & (graph.first_visit[x] <= n)
    return np.where(live, counts, 0)


def export_graph(graph: RangeGraph, edge_path, vertex_path) -> None:
    """Write the edge-list and vertex-table text formats."""
    np.savetxt(edge_path, graph.edges(), fmt="%d", header="id_u id_v",
               comments="# ")
    table = np.column_stack([
        np.arange(graph.n_vertices, dtype=np.int64),
        graph.coords.astype(np.int64),
        graph.degree,
        graph.first_visit,
        graph.last_visit,
    ])
    cols = " ".join(f"x{i+1}" for i in range(graph.dimension))
    np.savetxt(vertex_path, table, fmt="%d",
               header=f"id {cols} degree first_visit last_visit",
               comments="# ")
