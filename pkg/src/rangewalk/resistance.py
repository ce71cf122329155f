"""Effective resistance and graph distance structure of a range graph.

Both metrics from the origin decompose exactly across cut vertices: the
blocks between consecutive cut times partition the edges, consecutive
blocks share exactly the cut vertex, and every route from the origin into
a later block passes through the chain of cut vertices in order.  The
profile along the trajectory is therefore a prefix sum of per-block
two-point values plus a within-block term, which this module computes with
grounded Laplacian solves (dense direct below a size cutoff, diagonally
preconditioned conjugate gradients above it, exact rationals on tiny
fixtures).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cuts import CutTimeSet
from .graph import RangeGraph

DEFAULT_RTOL = 1e-10
DENSE_SOLVE_CAP = 600       # grounded direct solve for blocks up to this size
PINV_CAP = 3000             # dense pseudo-inverse for all-pairs needs
ORACLE_CAP = 300_000        # whole-graph oracle refuses larger graphs
MAXITER_FACTOR = 20


class SolverError(RuntimeError):
    """Raised when an iterative Laplacian solve misses its tolerance."""


# ---------------------------------------------------------------------------
# block decomposition

@dataclass(frozen=True)
class BlockDecomposition:
    """Trajectory blocks [T_{i-1}, T_i] glued at cut vertices.

    A cut time at 0 contributes no leading block (the origin and the first
    cut vertex coincide); the final partial block runs to the horizon.
    """
    starts: np.ndarray
    ends: np.ndarray
    horizon: int

    @property
    def n_blocks(self) -> int:
        return self.starts.shape[0]

    @property
    def glue_times(self) -> np.ndarray:
        """Interior boundaries: the cut times gluing consecutive blocks."""
        return self.starts[1:]

    def block_of(self, k) -> np.ndarray:
        """Index of the block whose window contains time k (boundaries go
        to the later block, where the within-block term vanishes)."""
        return np.searchsorted(self.starts, np.asarray(k), side="right") - 1


def decompose_blocks(cuts: CutTimeSet) -> BlockDecomposition:
    interior = cuts.times[cuts.times > 0]
    bounds = np.concatenate([[0], interior, [cuts.horizon]])
    return BlockDecomposition(starts=bounds[:-1], ends=bounds[1:],
                              horizon=cuts.horizon)


# ---------------------------------------------------------------------------
# Laplacian solvers

def _laplacian_csr(indptr, indices) -> sp.csr_matrix:
    n = indptr.shape[0] - 1
    deg = np.diff(indptr).astype(np.float64)
    adj = sp.csr_matrix((np.ones(indices.shape[0]), indices, indptr),
                        shape=(n, n))
    return sp.diags(deg) - adj


def _solve_grounded(lap: sp.csr_matrix, ground: int, rhs: np.ndarray,
                    rtol: float = DEFAULT_RTOL,
                    maxiter_factor: int = MAXITER_FACTOR,
                    dense_cap: int = DENSE_SOLVE_CAP) -> np.ndarray:
    """Solve L x = rhs with the ground row/column removed.

    rhs has shape (n, k) in full coordinates (ground row ignored); the
    result is returned in full coordinates with x[ground] = 0.
    """
    n = lap.shape[0]
    keep = np.ones(n, dtype=bool)
    keep[ground] = False
    reduced = lap[keep][:, keep]
    b = rhs[keep]
    if n <= dense_cap:
        x = np.linalg.solve(reduced.toarray(), b)
    else:
        diag = reduced.diagonal()
        precond = sp.diags(1.0 / diag)
        maxiter = maxiter_factor * n
        x = np.empty_like(b)
        for j in range(b.shape[1]):
            sol, info = spla.cg(reduced, b[:, j], rtol=rtol, atol=0.0,
                                M=precond, maxiter=maxiter)
            if info != 0:
                raise SolverError(
                    f"conjugate gradient failed to reach rtol={rtol} "
                    f"on a {n}-vertex block (info={info})")
            x[:, j] = sol
    out = np.zeros((n, rhs.shape[1]))
    out[keep] = x
    return out


def block_laplacian_resistance(block_graph: RangeGraph, source: int,
                               targets, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Effective resistances R(source, t) on a standalone graph.

    Each target gets its own unit current injection with the source
    grounded; by symmetry of the Laplacian this equals the resistance in
    either direction and obeys the series/parallel laws.
    """
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    lap = _laplacian_csr(block_graph.indptr, block_graph.indices)
    rhs = np.zeros((lap.shape[0], targets.shape[0]))
    rhs[targets, np.arange(targets.shape[0])] = 1.0
    x = _solve_grounded(lap, source, rhs, rtol=rtol)
    return x[targets, np.arange(targets.shape[0])]


def oracle_resistance(graph: RangeGraph, u: int, v: int,
                      cap: int = ORACLE_CAP) -> float:
    """Whole-graph two-point resistance, no block decomposition."""
    if graph.n_vertices > cap:
        raise ValueError(
            f"oracle cap {cap} exceeded ({graph.n_vertices} vertices)")
    if u == v:
        return 0.0
    lap = _laplacian_csr(graph.indptr, graph.indices)
    rhs = np.zeros((lap.shape[0], 1))
    rhs[v, 0] = 1.0
    return float(_solve_grounded(lap, u, rhs)[v, 0])


def oracle_resistance_profile(graph: RangeGraph, grid,
                              cap: int = ORACLE_CAP) -> np.ndarray:
    """R(0, S_k) for all grid times via one grounded direct factorization."""
    if graph.n_vertices > cap:
        raise ValueError(
            f"oracle cap {cap} exceeded ({graph.n_vertices} vertices)")
    grid = np.asarray(grid, dtype=np.int64)
    targets = graph.trace_ids[grid].astype(np.int64)
    lap = _laplacian_csr(graph.indptr, graph.indices)
    n = lap.shape[0]
    keep = np.ones(n, dtype=bool)
    keep[0] = False
    reduced = lap[keep][:, keep].tocsc()
    lu = spla.splu(reduced)
    uniq, inv = np.unique(targets, return_inverse=True)
    vals = np.zeros(uniq.shape[0])
    nz = uniq != 0
    if nz.any():
        rhs = np.zeros((n - 1, int(nz.sum())))
        rows = uniq[nz] - 1  # vertex ids shift by one past the ground 0
        rhs[rows, np.arange(rows.shape[0])] = 1.0
        x = lu.solve(rhs)
        vals[nz] = x[rows, np.arange(rows.shape[0])]
    return vals[inv]


def oracle_distance_profile(graph: RangeGraph, grid) -> np.ndarray:
    """d(0, S_k) for all grid times via one whole-graph breadth-first pass."""
    from scipy.sparse.csgraph import dijkstra
    grid = np.asarray(grid, dtype=np.int64)
    dist = dijkstra(graph.adjacency_scipy(), indices=0, unweighted=True)
    return dist[graph.trace_ids[grid]]


def exact_two_point_resistance(graph: RangeGraph, u: int, v: int) -> Fraction:
    """Tolerance-free resistance on tiny fixtures via rational elimination."""
    n = graph.n_vertices
    if n > 12:
        raise ValueError("exact rational solver capped at 12 vertices")
    if u == v:
        return Fraction(0)
    lap = [[Fraction(0)] * n for _ in range(n)]
    for a, b in graph.edges().tolist():
        lap[a][b] -= 1
        lap[b][a] -= 1
        lap[a][a] += 1
        lap[b][b] += 1
    keep = [i for i in range(n) if i != u]
    mat = [[lap[i][j] for j in keep] for i in keep]
    rhs = [Fraction(1) if i == v else Fraction(0) for i in keep]
    m = len(keep)
    for col in range(m):
        piv = next(r for r in range(col, m) if mat[r][col] != 0)
        mat[col], mat[piv] = mat[piv], mat[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        inv = Fraction(1) / mat[col][col]
        mat[col] = [x * inv for x in mat[col]]
        rhs[col] *= inv
        for r in range(m):
            if r != col and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[col])]
                rhs[r] -= f * rhs[col]
    return rhs[keep.index(v)]


# ---------------------------------------------------------------------------
# per-block worker

def _bfs_distances(indptr, indices, src: int, n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)
    dist[src] = 0
    frontier = [src]
    level = 0
    while frontier:
        level += 1
        nxt = []
        for f in frontier:
            for nb in indices[indptr[f]:indptr[f + 1]]:
                if dist[nb] < 0:
                    dist[nb] = level
                    nxt.append(nb)
        frontier = nxt
    return dist


class _BlockSolver:
    """Local structure of one trajectory block [s, e].

    Local vertex ids come from np.unique of the trace slice; the block is
    a bare path exactly when the slice is self-avoiding, in which case all
    quantities are closed-form.  Solves are tiered by block size: dense
    direct, sparse LU, then preconditioned conjugate gradients.
    """

    def __init__(self, graph: RangeGraph, s: int, e: int,
                 rtol: float = DEFAULT_RTOL,
                 maxiter_factor: int = MAXITER_FACTOR,
                 force_cg: bool = False):
        self.s, self.e = int(s), int(e)
        self.rtol = rtol
        self.maxiter_factor = maxiter_factor
        self.force_cg = force_cg
        ids = graph.trace_ids[self.s:self.e + 1]
        uniq, inv = np.unique(ids, return_inverse=True)
        self.global_ids = uniq
        self.inv = inv  # local id per time offset
        self.n_local = uniq.shape[0]
        self.steps = self.e - self.s
        self.is_path = self.n_local == self.steps + 1
        self.in_local = int(inv[0])
        self.out_local = int(inv[-1])
        self._edges = None
        self._pinv = None
        self._indptr = None
        self._lu = None

    def _edge_lists(self):
        if self._edges is None:
            lu = self.inv[:-1].astype(np.int64)
            lv = self.inv[1:].astype(np.int64)
            lo, hi = np.minimum(lu, lv), np.maximum(lu, lv)
            ekey = np.unique(lo * self.n_local + hi)
            self._edges = (ekey // self.n_local, ekey % self.n_local)
        return self._edges

    def _dense_lap(self) -> np.ndarray:
        elo, ehi = self._edge_lists()
        k = self.n_local
        lap = np.zeros((k, k))
        lap[elo, ehi] = -1.0  # edges are unique: plain scatter suffices
        lap[ehi, elo] = -1.0
        deg = np.bincount(elo, minlength=k) + np.bincount(ehi, minlength=k)
        lap[np.arange(k), np.arange(k)] = deg
        return lap

    def _csr(self):
        if self._indptr is None:
            elo, ehi = self._edge_lists()
            src = np.concatenate([elo, ehi])
            dst = np.concatenate([ehi, elo])
            order = np.argsort(src, kind="stable")
            self._indices = dst[order]
            counts = np.bincount(src, minlength=self.n_local)
            self._indptr = np.zeros(self.n_local + 1, dtype=np.int64)
            np.cumsum(counts, out=self._indptr[1:])
        return self._indptr, self._indices

    def _grounded_solve(self, anchor_local: int, rhs: np.ndarray) -> np.ndarray:
        """Solve the anchored system; rhs in full coordinates (n_local, t)."""
        keep = np.ones(self.n_local, dtype=bool)
        keep[anchor_local] = False
        b = rhs[keep]
        if self.n_local <= DENSE_SOLVE_CAP and not self.force_cg:
            lap = self._dense_lap()
            x = np.linalg.solve(lap[np.ix_(keep, keep)], b)
        else:
            indptr, indices = self._csr()
            lap = _laplacian_csr(indptr, indices)
            reduced = lap[keep][:, keep]
            if self.n_local <= ORACLE_CAP and not self.force_cg:
                if self._lu is None or self._lu[0] != anchor_local:
                    self._lu = (anchor_local, spla.splu(reduced.tocsc()))
                x = self._lu[1].solve(b)
            else:
                # diagonally preconditioned conjugate gradients; accuracy is
                # governed by rtol, so this path also serves tolerance checks
                x = np.empty_like(b)
                diag = reduced.diagonal()
                precond = sp.diags(1.0 / diag)
                for j in range(b.shape[1]):
                    sol, info = spla.cg(reduced, b[:, j], rtol=self.rtol,
                                        atol=0.0, M=precond,
                                        maxiter=self.maxiter_factor * self.n_local)
                    if info != 0:
                        raise SolverError(
                            f"conjugate gradient failed on a {self.n_local}-"
                            f"vertex block (info={info})")
                    x[:, j] = sol
        out = np.zeros((self.n_local, rhs.shape[1]))
        out[keep] = x
        return out

    def resistance_from(self, anchor_local: int, time_offsets) -> np.ndarray:
        """R(anchor, S_{s+t}) for local time offsets t."""
        offs = np.atleast_1d(np.asarray(time_offsets, dtype=np.int64))
        if self.is_path:
            anchor_t = 0 if anchor_local == self.in_local else self.steps
            return np.abs(offs - anchor_t).astype(np.float64)
        targets = self.inv[offs]
        if self._pinv is not None:
            p = self._pinv
            return (p[anchor_local, anchor_local] + p[targets, targets]
                    - 2 * p[anchor_local, targets])
        uniq_t, inv_t = np.unique(targets, return_inverse=True)
        rhs = np.zeros((self.n_local, uniq_t.shape[0]))
        rhs[uniq_t, np.arange(uniq_t.shape[0])] = 1.0
        x = self._grounded_solve(anchor_local, rhs)
        return x[uniq_t, np.arange(uniq_t.shape[0])][inv_t]

    def ensure_pinv(self):
        """Dense pseudo-inverse for all-pairs needs (small blocks only)."""
        if self._pinv is None:
            if self.n_local > PINV_CAP:
                raise ValueError(
                    f"all-pairs block of {self.n_local} vertices exceeds the "
                    f"dense pseudo-inverse cap {PINV_CAP}")
            p = np.linalg.pinv(self._dense_lap())
            self._pinv = (p + p.T) / 2.0  # L+ is symmetric; enforce it exactly
        return self._pinv

    def pairwise(self, off_a, off_b) -> float:
        """Exact within-block resistance between two time offsets."""
        if self.is_path:
            return float(abs(int(off_a) - int(off_b)))
        p = self.ensure_pinv()
        a, b = self.inv[int(off_a)], self.inv[int(off_b)]
        return float(p[a, a] + p[b, b] - 2 * p[a, b])

    def spine_resistance(self) -> float:
        if self.is_path:
            return float(self.steps)
        return float(self.resistance_from(self.in_local, [self.steps])[0])

    def distance_from_in(self, time_offsets) -> np.ndarray:
        offs = np.atleast_1d(np.asarray(time_offsets, dtype=np.int64))
        if self.is_path:
            return offs.astype(np.float64)
        indptr, indices = self._csr()
        dist = _bfs_distances(indptr, indices, self.in_local, self.n_local)
        return dist[self.inv[offs]].astype(np.float64)

    def spine_distance(self) -> float:
        if self.is_path:
            return float(self.steps)
        return float(self.distance_from_in([self.steps])[0])


# ---------------------------------------------------------------------------
# metric profiles

@dataclass
class MetricProfile:
    """R(0, S_k) and d(0, S_k) on a time grid, with running maxima."""
    grid: np.ndarray
    resistance: np.ndarray | None
    distance: np.ndarray | None
    past_max_resistance: np.ndarray | None
    past_max_distance: np.ndarray | None
    provisional: np.ndarray


class _BlockTableau:
    """Shared vectorized block-local structure for a window of blocks.

    One global sort produces, for every block below `limit`: the local
    vertex count, the local ids of every trace position (np.unique order,
    matching _BlockSolver), the glue endpoints, and the deduplicated local
    edge lists.  Everything downstream (path detection, batched spine
    solves) reads from here.
    """

    def __init__(self, graph: RangeGraph, dec: BlockDecomposition, limit: int):
        self.limit = limit
        lengths = (dec.ends - dec.starts + 1)[:limit]
        base = np.arange(int(dec.ends[limit - 1]) + 1, dtype=np.int64)
        interior = dec.starts[1:limit]
        positions = np.insert(base, interior, interior)
        block_col = np.repeat(np.arange(limit, dtype=np.int64), lengths)
        vids = graph.trace_ids[positions].astype(np.int64)
        stride = np.int64(graph.n_vertices + 1)
        pair_keys = block_col * stride + vids
        uniq, inv = np.unique(pair_keys, return_inverse=True)
        pair_block = uniq // stride
        offsets = np.searchsorted(pair_block, np.arange(limit))
        local = inv - offsets[block_col]
        self.sizes = np.diff(np.r_[offsets, uniq.shape[0]])
        self.lengths = lengths
        self.is_path = self.sizes == lengths
        first_pos = np.cumsum(lengths) - lengths
        self.in_local = local[first_pos]
        self.out_local = local[first_pos + lengths - 1]
        same = block_col[1:] == block_col[:-1]
        bu, bv = local[:-1][same], local[1:][same]
        eb = block_col[1:][same]
        lo, hi = np.minimum(bu, bv), np.maximum(bu, bv)
        packable = self.sizes.max(initial=0) < (1 << 16)
        if packable:
            ekey = np.unique((eb << np.int64(32)) | (lo << np.int64(16)) | hi)
            self.edge_block = ekey >> np.int64(32)
            self.edge_lo = (ekey >> np.int64(16)) & np.int64(0xFFFF)
            self.edge_hi = ekey & np.int64(0xFFFF)
            self.edge_offsets = np.searchsorted(self.edge_block,
                                                np.arange(limit + 1))
        else:  # gigantic blocks go through _BlockSolver individually
            self.edge_block = None


def _path_block_mask(graph: RangeGraph, dec: BlockDecomposition) -> np.ndarray:
    """Vectorized self-avoiding test for every block at once."""
    if dec.n_blocks == 0:
        return np.zeros(0, dtype=bool)
    return _BlockTableau(graph, dec, dec.n_blocks).is_path


_BATCH_SIZE_CAP = 64          # stacked dense solves for blocks up to this size
_BATCH_CHUNK_FLOATS = 4_000_000


def _batched_spine_resistance(graph: RangeGraph, dec: BlockDecomposition,
                              tableau: _BlockTableau, vals: np.ndarray,
                              rtol: float, solvers: dict) -> None:
    """Fill vals[j] = R_block_j(glue_in, glue_out) for non-path blocks.

    Same-size blocks are solved in stacked LAPACK calls on the ground-
    regularized Laplacian M = L + e_g e_g^T, for which the solve of e_t
    satisfies x_g = 1 and R(g, t) = x_t - 1.  Oversized or unpackable
    blocks fall back to their individual solver.
    """
    limit = tableau.limit
    nonpath = np.flatnonzero(~tableau.is_path)
    if tableau.edge_block is None:
        batchable = np.zeros(0, dtype=np.int64)
        rest = nonpath
    else:
        small = tableau.sizes[nonpath] <= _BATCH_SIZE_CAP
        batchable = nonpath[small]
        rest = nonpath[~small]
    for k in np.unique(tableau.sizes[batchable]).tolist():
        group = batchable[tableau.sizes[batchable] == k]
        chunk = max(1, _BATCH_CHUNK_FLOATS // (k * k))
        for c0 in range(0, group.shape[0], chunk):
            blocks = group[c0:c0 + chunk]
            b = blocks.shape[0]
            mats = np.zeros((b, k, k))
            flat = mats.reshape(b, k * k)
            counts = np.zeros((b, k), dtype=np.int64)
            for rel, j in enumerate(blocks.tolist()):
                e0, e1 = tableau.edge_offsets[j], tableau.edge_offsets[j + 1]
                lo = tableau.edge_lo[e0:e1]
                hi = tableau.edge_hi[e0:e1]
                flat[rel, lo * k + hi] = -1.0
                flat[rel, hi * k + lo] = -1.0
                counts[rel] = (np.bincount(lo, minlength=k)
                               + np.bincount(hi, minlength=k))
            diag = np.arange(k) * (k + 1)
            flat[:, diag] = counts
            grounds = tableau.in_local[blocks]
            flat[np.arange(b), grounds * (k + 1)] += 1.0
            rhs = np.zeros((b, k))
            rhs[np.arange(b), tableau.out_local[blocks]] = 1.0
            x = np.linalg.solve(mats, rhs[:, :, None])[:, :, 0]
            vals[blocks] = x[np.arange(b), tableau.out_local[blocks]] - 1.0
    for j in rest.tolist():
        solver = solvers.get(j)
        if solver is None:
            solver = _BlockSolver(graph, dec.starts[j], dec.ends[j], rtol=rtol)
            solvers[j] = solver
        vals[j] = solver.spine_resistance()


def _spine_values(graph: RangeGraph, dec: BlockDecomposition, part: str,
                  rtol: float, solvers: dict, limit: int | None = None,
                  solver_factory=None) -> np.ndarray:
    """Per-block two-point value between glue vertices, path fast-path.

    Blocks at or past `limit` are left NaN so accidental use fails loudly.
    A custom solver_factory disables the batched path (it could not honor
    per-solver options such as forced conjugate gradients).
    """
    if limit is None:
        limit = dec.n_blocks
    vals = (dec.ends - dec.starts).astype(np.float64)
    vals[limit:] = np.nan
    if limit == 0:
        return vals
    tableau = _BlockTableau(graph, dec, limit)
    if part == "resistance" and solver_factory is None:
        _batched_spine_resistance(graph, dec, tableau, vals, rtol, solvers)
        return vals
    if solver_factory is None:
        def solver_factory(j):
            return _BlockSolver(graph, dec.starts[j], dec.ends[j], rtol=rtol)
    for j in np.flatnonzero(~tableau.is_path).tolist():
        solver = solvers.get(j)
        if solver is None:
            solver = solver_factory(j)
            solvers[j] = solver
        vals[j] = (solver.spine_resistance() if part == "resistance"
                   else solver.spine_distance())
    return vals


def metric_profile(graph: RangeGraph, cuts: CutTimeSet, grid=None,
                   parts=("resistance", "distance"),
                   rtol: float = DEFAULT_RTOL,
                   force_iterative: bool = False) -> MetricProfile:
    """Blockwise profile of R and/or d from the origin along the trajectory.

    grid defaults to every time in [0, N].  Values at times past the last
    cut vertex or inside the horizon buffer carry the provisional flag.
    force_iterative routes every Laplacian solve through conjugate
    gradients so the configured rtol genuinely controls the accuracy
    (used by tolerance verification).
    """
    n = graph.horizon
    grid = np.arange(n + 1) if grid is None else np.asarray(grid, dtype=np.int64)
    if grid.size and (grid.min() < 0 or grid.max() > n):
        raise ValueError("grid outside [0, horizon]")
    dec = decompose_blocks(cuts)
    solvers: dict = {}

    def make_solver(j):
        return _BlockSolver(graph, dec.starts[j], dec.ends[j], rtol=rtol,
                            force_cg=force_iterative)
    out = {"resistance": None, "distance": None}
    pmax = {"resistance": None, "distance": None}
    blocks = dec.block_of(grid)
    limit = int(blocks.max()) + 1 if grid.size else 0
    for part in parts:
        spine = _spine_values(graph, dec, part, rtol, solvers, limit=limit,
                              solver_factory=make_solver if force_iterative
                              else None)
        prefix = np.concatenate([[0.0], np.cumsum(spine)])
        values = prefix[blocks].copy()
        for j in np.unique(blocks).tolist():
            sel = blocks == j
            offs = grid[sel] - dec.starts[j]
            if np.all(offs == 0):
                continue
            solver = solvers.get(j)
            if solver is None:
                solver = make_solver(j)
                solvers[j] = solver
            within = (solver.resistance_from(solver.in_local, offs)
                      if part == "resistance"
                      else solver.distance_from_in(offs))
            values[sel] += within
        out[part] = values
        pmax[part] = np.maximum.accumulate(values)
    last_cut = cuts.times[-1] if len(cuts) else -1
    provisional = (grid > last_cut) | (grid > n - cuts.buffer)
    provisional &= grid > 0
    return MetricProfile(grid=grid, resistance=out["resistance"],
                         distance=out["distance"],
                         past_max_resistance=pmax["resistance"],
                         past_max_distance=pmax["distance"],
                         provisional=provisional)


def resistance_profile(graph, cuts, grid=None, rtol=DEFAULT_RTOL) -> MetricProfile:
    return metric_profile(graph, cuts, grid, parts=("resistance",), rtol=rtol)


def distance_profile(graph, cuts, grid=None, rtol=DEFAULT_RTOL) -> MetricProfile:
    return metric_profile(graph, cuts, grid, parts=("distance",), rtol=rtol)


def past_max_deviation(profile: MetricProfile) -> dict:
    """max_k |running max - value| for each computed metric part."""
    out = {}
    for name, values in (("resistance", profile.resistance),
                         ("distance", profile.distance)):
        if values is not None:
            out[name] = float(np.abs(np.maximum.accumulate(values) - values).max())
    return out


def export_profile_csv(profile: MetricProfile, path) -> None:
    cols = [profile.grid]
    header = ["k"]
    for name in ("resistance", "distance", "past_max_resistance",
                 "past_max_distance"):
        arr = getattr(profile, name)
        if arr is not None:
            cols.append(arr)
            header.append(name)
    cols.append(profile.provisional.astype(np.int64))
    header.append("provisional_flag")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*[c.tolist() for c in cols]):
            fh.write(",".join(str(x) for x in row) + "\n")


# ---------------------------------------------------------------------------
# resistance balls, across-ball resistance, covering numbers

@dataclass
class ResistanceBall:
    """Vertices closer than radius to the center in effective resistance."""
    center: int
    radius: float
    members: np.ndarray
    member_resistance: np.ndarray
    cut_vertex_count: int


class ResistanceField:
    """Per-time resistance bookkeeping for ball and covering queries.

    Holds, for every trajectory time within the solved range: R(0, S_k),
    the within-block values to the block's backward and forward glue, and
    the block index.  Distances between any glue vertex (origin or cut
    vertex) and any solved vertex follow from the chain identities.
    """

    def __init__(self, graph: RangeGraph, cuts: CutTimeSet,
                 radius: float | None = None, rtol: float = DEFAULT_RTOL):
        self.graph = graph
        self.cuts = cuts
        self.dec = decompose_blocks(cuts)
        self.rtol = rtol
        self._solvers: dict = {}
        # spine prefix grown block by block; stop once the entry resistance
        # is beyond any center that could still touch the ball (5r/3)
        path_mask = _path_block_mask(graph, self.dec)
        gaps = (self.dec.ends - self.dec.starts).astype(np.float64)
        stop_val = None if radius is None else 5.0 * radius / 3.0
        spine = []
        prefix = [0.0]
        for j in range(self.dec.n_blocks):
            if stop_val is not None and spine and prefix[-1] >= stop_val:
                break
            val = gaps[j] if path_mask[j] \
                else self._solver(j).spine_resistance()
            spine.append(val)
            prefix.append(prefix[-1] + val)
        self.spine = np.asarray(spine)
        self.prefix = np.asarray(prefix)
        if radius is None:
            self.n_solved_blocks = self.dec.n_blocks
        else:
            self.n_solved_blocks = int(np.searchsorted(self.prefix[:-1],
                                                       radius, side="left"))
            self.n_solved_blocks = max(1, min(self.spine.shape[0],
                                              self.n_solved_blocks))
        last = self.dec.ends[self.n_solved_blocks - 1]
        self.solved_horizon = int(last)
        times = np.arange(self.solved_horizon + 1, dtype=np.int64)
        self.block_idx = self.dec.block_of(times)
        self.r_in = np.zeros(times.shape[0])
        self.r_out = np.zeros(times.shape[0])
        for j in range(self.n_solved_blocks):
            s, e = int(self.dec.starts[j]), int(self.dec.ends[j])
            offs = np.arange(e - s + 1, dtype=np.int64)
            solver = self._solver(j)
            if solver.is_path:
                rin = offs.astype(np.float64)
                rout = (e - s - offs).astype(np.float64)
            else:
                p = solver.ensure_pinv()
                loc = solver.inv
                rin = (p[solver.in_local, solver.in_local] + p[loc, loc]
                       - 2 * p[solver.in_local, loc])
                rout = (p[solver.out_local, solver.out_local] + p[loc, loc]
                        - 2 * p[solver.out_local, loc])
            sel = slice(s, e + 1)
            # boundary times belong to the later block in block_idx; only
            # overwrite entries whose block index matches j
            mask = self.block_idx[sel] == j
            self.r_in[sel][...] = np.where(mask, rin, self.r_in[sel])
            self.r_out[sel][...] = np.where(mask, rout, self.r_out[sel])
        self.r0 = self.prefix[self.block_idx] + self.r_in

    def _solver(self, j: int) -> _BlockSolver:
        solver = self._solvers.get(j)
        if solver is None:
            solver = _BlockSolver(self.graph, self.dec.starts[j],
                                  self.dec.ends[j], rtol=self.rtol)
            self._solvers[j] = solver
        return solver

    def glue_r0(self, j: int) -> float:
        """R(0, glue vertex at the start of block j)."""
        return float(self.prefix[j])

    def resistance_from_glue(self, j: int, times: np.ndarray) -> np.ndarray:
        """R(start-glue of block j, S_t) for solved times t, chain-exact."""
        times = np.asarray(times, dtype=np.int64)
        blocks = self.block_idx[times]
        anchor = self.prefix[j]
        fwd = self.r0[times] - anchor                      # blocks at or past j
        bwd = self.r_out[times] + (anchor - self.prefix[blocks + 1])
        return np.where(blocks >= j, fwd, bwd)


def resistance_ball(graph: RangeGraph, cuts: CutTimeSet, radius: float,
                    rtol: float = DEFAULT_RTOL) -> ResistanceBall:
    """Open resistance ball around the origin, computed blockwise.

    Only blocks whose entry resistance is below the radius are solved:
    R(0, v) >= prefix resistance of v's block, so later blocks cannot
    contribute members.  Also counts the cut vertices inside the ball.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    field = ResistanceField(graph, cuts, radius=radius, rtol=rtol)
    times = np.arange(field.solved_horizon + 1, dtype=np.int64)
    inside = field.r0 < radius
    vids = graph.trace_ids[times[inside]]
    members, first_pos = np.unique(vids, return_index=True)
    rvals = field.r0[times[inside]][first_pos]
    n_glues = field.dec.glue_times.shape[0]
    cut_r0 = field.prefix[1:n_glues + 1]
    cut_count = int(np.sum(cut_r0 < radius))
    if len(cuts) and cuts.times[0] == 0:
        cut_count += 1  # T_1 = 0: the origin itself is a cut vertex
    return ResistanceBall(center=0, radius=float(radius), members=members,
                          member_resistance=rvals, cut_vertex_count=cut_count)


def resistance_across_ball(graph: RangeGraph, radius: float,
                           cuts: CutTimeSet | None = None,
                           rtol: float = DEFAULT_RTOL) -> float:
    """Effective resistance from the origin to the ball's complement.

    The complement acts as a single grounded terminal: the Laplacian is
    restricted to the ball's interior and solved for unit current at the
    origin.
    """
    if cuts is None:
        from .cuts import find_cut_times_from_graph
        cuts = find_cut_times_from_graph(graph)
    ball = resistance_ball(graph, cuts, radius, rtol=rtol)
    n = graph.n_vertices
    inside = np.zeros(n, dtype=bool)
    inside[ball.members] = True
    if inside.all():
        raise ValueError(
            f"ball of radius {radius} covers the whole horizon graph")
    lap = _laplacian_csr(graph.indptr, graph.indices)
    sub = lap[ball.members][:, ball.members]
    origin_local = int(np.searchsorted(ball.members, 0))
    rhs = np.zeros((ball.members.shape[0], 1))
    rhs[origin_local, 0] = 1.0
    if ball.members.shape[0] <= DENSE_SOLVE_CAP:
        x = np.linalg.solve(sub.toarray(), rhs)
    else:
        x = spla.spsolve(sub.tocsc(), rhs).reshape(-1, 1)
    return float(x[origin_local, 0])


def covering_number(graph: RangeGraph, cuts: CutTimeSet, radius: float,
                    rtol: float = DEFAULT_RTOL) -> int:
    """Greedy cover of B(0, r) by balls of radius 2r/3 at cut vertices.

    Walks the uncovered vertex of smallest first visit; that vertex itself
    serves as the next center when it is the origin or a cut vertex,
    otherwise the nearest glue center covering it is used.  If no glue
    center reaches it, the vertex itself becomes an emergency center, kept
    so the result still upper-bounds the minimal cover over V(G).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    small = 2.0 * radius / 3.0
    field = ResistanceField(graph, cuts, radius=radius, rtol=rtol)
    times = np.arange(field.solved_horizon + 1, dtype=np.int64)
    inside = field.r0 < radius
    member_times = times[inside]
    vids = graph.trace_ids[member_times]
    # representative time per member vertex: its first visit
    members, first_pos = np.unique(vids, return_index=True)
    rep_times = member_times[first_pos]
    order = np.argsort(graph.first_visit[members], kind="stable")
    rep_times = rep_times[order]
    # candidate glue centers: origin and every cut vertex near enough to the
    # ball that its 2r/3-ball could intersect it
    n_glue = field.dec.glue_times.shape[0]
    glue_js = np.flatnonzero(field.prefix[:n_glue + 1] < radius + small)
    covered = np.zeros(rep_times.shape[0], dtype=bool)
    n_centers = 0
    glue_time_of = np.concatenate([[0], field.dec.glue_times])
    while not covered.all():
        w_idx = int(np.flatnonzero(~covered)[0])
        w_time = int(rep_times[w_idx])
        w_block = int(field.block_idx[w_time])
        is_glue = (w_time == 0) or (w_time in field.dec.glue_times)
        if is_glue:
            # boundary times sit at the start of their (later) block
            center_j = w_block
            dist = field.resistance_from_glue(center_j, rep_times)
        else:
            cand = []
            for j in glue_js.tolist():
                d = field.resistance_from_glue(j, np.asarray([w_time]))[0]
                cand.append((d, int(glue_time_of[j]) if j > 0 else 0, j))
            cand.sort()
            if cand and cand[0][0] < small:
                center_j = cand[0][2]
                dist = field.resistance_from_glue(center_j, rep_times)
            else:
                # emergency center at w itself: exact in its own block via
                # the block pseudo-inverse, chain identities elsewhere
                solver = field._solver(w_block)
                offs = rep_times - field.dec.starts[w_block]
                w_off = w_time - int(field.dec.starts[w_block])
                same = field.block_idx[rep_times] == w_block
                dist = np.empty(rep_times.shape[0])
                for i in np.flatnonzero(same).tolist():
                    dist[i] = solver.pairwise(w_off, offs[i])
                before = field.block_idx[rep_times] < w_block
                after = field.block_idx[rep_times] > w_block
                r_w_in = solver.pairwise(w_off, 0)
                r_w_out = solver.pairwise(w_off, solver.steps)
                dist[before] = r_w_in + (
                    field.prefix[w_block]
                    - field.prefix[field.block_idx[rep_times[before]] + 1]
                    + field.r_out[rep_times[before]])
                dist[after] = r_w_out + (
                    field.r0[rep_times[after]] - field.prefix[w_block + 1])
        newly = dist < small
        if not newly[w_idx]:
            newly = newly.copy()
            newly[w_idx] = True  # a center always covers itself
        covered |= newly
        n_centers += 1
    return n_centers
