"""Uniform-grid spatial hash with compiled radius queries.

The grid is built with numpy: points are bucketed into cubic cells, sorted by
linear cell key, and each occupied cell records its run in the sorted order.
A radius query visits the cells within ``ceil(radius / cell)`` steps of the
query cell, skipping any cell whose box lies out of range. The inner loops
are numba kernels that visit candidates in a fixed order, so results depend
on nothing but the inputs.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

# Dense cell tables above this many grid cells fall back to binary search.
_DENSE_TABLE_LIMIT = 1 << 22


@njit(cache=True)
def _find_cell(cell_keys, table, key):
    if table.shape[0]:
        return table[key]
    lo, hi = 0, cell_keys.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if cell_keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < cell_keys.shape[0] and cell_keys[lo] == key:
        return lo
    return -1


@njit(cache=True)
def _axis_gap(v, lo, hi):
    if v < lo:
        return lo - v
    if v > hi:
        return v - hi
    return 0.0


@njit(cache=True)
def _cell_runs(qx, qy, qz, coords, grid_origin, cell, dims, span, r2, cell_keys, table, cell_start, cell_count, runs):
    """Fill ``runs`` with (start, stop) slices of ``order`` for cells in range of a query.

    Cells are emitted in ascending key order.
    """
    n = 0
    cx, cy, cz = coords[0], coords[1], coords[2]
    for dx in range(-span, span + 1):
        x = cx + dx
        if x < 0 or x >= dims[0]:
            continue
        lo = grid_origin[0] + x * cell
        gx = _axis_gap(qx, lo, lo + cell)
        gx *= gx
        if gx >= r2:
            continue
        for dy in range(-span, span + 1):
            y = cy + dy
            if y < 0 or y >= dims[1]:
                continue
            lo = grid_origin[1] + y * cell
            gy = _axis_gap(qy, lo, lo + cell)
            gy = gx + gy * gy
            if gy >= r2:
                continue
            for dz in range(-span, span + 1):
                z = cz + dz
                if z < 0 or z >= dims[2]:
                    continue
                lo = grid_origin[2] + z * cell
                gz = _axis_gap(qz, lo, lo + cell)
                if gy + gz * gz >= r2:
                    continue
                pos = _find_cell(cell_keys, table, (x * dims[1] + y) * dims[2] + z)
                if pos < 0:
                    continue
                runs[n, 0] = cell_start[pos]
                runs[n, 1] = cell_start[pos] + cell_count[pos]
                n += 1
    return n


@njit(cache=True)
def _count_kernel(points, queries, qcoords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2):
    out = np.zeros(queries.shape[0], dtype=np.int64)
    runs = np.empty(((2 * span + 1) ** 3, 2), dtype=np.int64)
    for q in range(queries.shape[0]):
        qx, qy, qz = queries[q, 0], queries[q, 1], queries[q, 2]
        nr = _cell_runs(qx, qy, qz, qcoords[q], grid_origin, cell, dims, span, r2, cell_keys, table, cell_start, cell_count, runs)
        c = 0
        for k in range(nr):
            for t in range(runs[k, 0], runs[k, 1]):
                p = order[t]
                d0 = qx - points[p, 0]
                d1 = qy - points[p, 1]
                d2 = qz - points[p, 2]
                if d0 * d0 + d1 * d1 + d2 * d2 < r2:
                    c += 1
        out[q] = c
    return out


@njit(cache=True)
def _fill_kernel(points, queries, qcoords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2, indptr):
    indices = np.empty(indptr[-1], dtype=np.int64)
    runs = np.empty(((2 * span + 1) ** 3, 2), dtype=np.int64)
    for q in range(queries.shape[0]):
        qx, qy, qz = queries[q, 0], queries[q, 1], queries[q, 2]
        nr = _cell_runs(qx, qy, qz, qcoords[q], grid_origin, cell, dims, span, r2, cell_keys, table, cell_start, cell_count, runs)
        w = indptr[q]
        for k in range(nr):
            for t in range(runs[k, 0], runs[k, 1]):
                p = order[t]
                d0 = qx - points[p, 0]
                d1 = qy - points[p, 1]
                d2 = qz - points[p, 2]
                if d0 * d0 + d1 * d1 + d2 * d2 < r2:
                    indices[w] = p
                    w += 1
        indices[indptr[q] : w].sort()
    return indices


@njit(cache=True)
def _grow(a, used, cap):
    out = np.empty(cap, dtype=a.dtype)
    out[:used] = a[:used]
    return out


@njit(cache=True)
def _first_above(order, lo, hi, u):
    # Runs list their points in ascending index order (the cell sort is stable).
    while lo < hi:
        mid = (lo + hi) >> 1
        if order[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _emit_upper(points, order, runs, nr, u, r2, pu, pv, w):
    ux, uy, uz = points[u, 0], points[u, 1], points[u, 2]
    for k in range(nr):
        for t in range(_first_above(order, runs[k, 0], runs[k, 1], u), runs[k, 1]):
            v = order[t]
            d0 = ux - points[v, 0]
            d1 = uy - points[v, 1]
            d2 = uz - points[v, 2]
            if d0 * d0 + d1 * d1 + d2 * d2 < r2:
                pu[w] = u
                pv[w] = v
                w += 1
    return w


@njit(cache=True)
def _upper_pairs(points, coords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2):
    # Every in-range pair (u, v) with u < v, emitted with u ascending.
    n = points.shape[0]
    cap = max(16, 8 * n)
    pu = np.empty(cap, dtype=np.int32)
    pv = np.empty(cap, dtype=np.int32)
    w = 0
    runs = np.empty(((2 * span + 1) ** 3, 2), dtype=np.int64)
    for u in range(n):
        ux, uy, uz = points[u, 0], points[u, 1], points[u, 2]
        nr = _cell_runs(ux, uy, uz, coords[u], grid_origin, cell, dims, span, r2, cell_keys, table, cell_start, cell_count, runs)
        bound = 0
        for k in range(nr):
            bound += runs[k, 1] - runs[k, 0]
        if w + bound > cap:
            cap = max(2 * cap, w + bound)
            pu = _grow(pu, w, cap)
            pv = _grow(pv, w, cap)
        w = _emit_upper(points, order, runs, nr, u, r2, pu, pv, w)
    return pu[:w], pv[:w]


@njit(cache=True)
def _symmetric_lists(points, coords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2, include_self):
    n = points.shape[0]
    pu, pv = _upper_pairs(points, coords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2)
    lower = np.zeros(n, dtype=np.int64)
    upper = np.zeros(n, dtype=np.int64)
    for t in range(pu.shape[0]):
        lower[pv[t]] += 1
        upper[pu[t]] += 1
    extra = 1 if include_self else 0
    indptr = np.zeros(n + 1, dtype=np.int64)
    for u in range(n):
        indptr[u + 1] = indptr[u] + lower[u] + extra + upper[u]
    indices = np.empty(indptr[n], dtype=np.int32)
    # Row v's lower part: pairs arrive with u ascending, so appends stay sorted.
    lfill = indptr[:n].copy()
    for t in range(pu.shape[0]):
        v = pv[t]
        indices[lfill[v]] = pu[t]
        lfill[v] += 1
    if include_self:
        for u in range(n):
            indices[lfill[u]] = u
            lfill[u] += 1
    # Row u's upper part is its own contiguous run of pairs, in grid order.
    t = 0
    for u in range(n):
        w = lfill[u]
        for _ in range(upper[u]):
            indices[w] = pv[t]
            w += 1
            t += 1
    return indptr, indices


@njit(cache=True)
def _find_root(parent, u):
    while parent[u] != u:
        parent[u] = parent[parent[u]]
        u = parent[u]
    return u


@njit(cache=True)
def _union(parent, a, b):
    # Smaller index becomes the root, so every root is its component's minimum.
    if a < b:
        parent[b] = a
    else:
        parent[a] = b


@njit(cache=True)
def _components_kernel(points, coords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2):
    n = points.shape[0]
    parent = np.arange(n)
    n_cells = cell_keys.shape[0]
    # Pass 1: link each point to its cell's first point when in range. A cell
    # whose points all linked is "complete" and can be skipped wholesale later.
    complete = np.ones(n_cells, dtype=np.bool_)
    for c in range(n_cells):
        f = order[cell_start[c]]
        for t in range(cell_start[c] + 1, cell_start[c] + cell_count[c]):
            v = order[t]
            d0 = points[f, 0] - points[v, 0]
            d1 = points[f, 1] - points[v, 1]
            d2 = points[f, 2] - points[v, 2]
            if d0 * d0 + d1 * d1 + d2 * d2 < r2:
                ra = _find_root(parent, f)
                rb = _find_root(parent, v)
                if ra != rb:
                    _union(parent, ra, rb)
            else:
                complete[c] = False
    cell_of = np.empty(order.shape[0], dtype=np.int64)
    for c in range(n_cells):
        for t in range(cell_start[c], cell_start[c] + cell_count[c]):
            cell_of[t] = c
    runs = np.empty(((2 * span + 1) ** 3, 2), dtype=np.int64)
    for u in range(n):
        ux, uy, uz = points[u, 0], points[u, 1], points[u, 2]
        nr = _cell_runs(ux, uy, uz, coords[u], grid_origin, cell, dims, span, r2, cell_keys, table, cell_start, cell_count, runs)
        for k in range(nr):
            first = runs[k, 0]
            if complete[cell_of[first]] and _find_root(parent, order[first]) == _find_root(parent, u):
                continue
            for t in range(_first_above(order, first, runs[k, 1], u), runs[k, 1]):
                v = order[t]
                ru = _find_root(parent, u)
                rv = _find_root(parent, v)
                if ru == rv:
                    continue
                d0 = ux - points[v, 0]
                d1 = uy - points[v, 1]
                d2 = uz - points[v, 2]
                if d0 * d0 + d1 * d1 + d2 * d2 < r2:
                    _union(parent, ru, rv)
    labels = np.empty(n, dtype=np.int64)
    next_label = 0
    for u in range(n):
        r = _find_root(parent, u)
        if r == u:
            labels[u] = next_label
            next_label += 1
        else:
            labels[u] = labels[r]
    return labels


@njit(cache=True)
def _nearest_kernel(points, queries, qcoords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2):
    n = queries.shape[0]
    best = np.full(n, -1, dtype=np.int64)
    best_d2 = np.full(n, np.inf)
    runs = np.empty(((2 * span + 1) ** 3, 2), dtype=np.int64)
    for q in range(n):
        qx, qy, qz = queries[q, 0], queries[q, 1], queries[q, 2]
        nr = _cell_runs(qx, qy, qz, qcoords[q], grid_origin, cell, dims, span, r2, cell_keys, table, cell_start, cell_count, runs)
        for k in range(nr):
            for t in range(runs[k, 0], runs[k, 1]):
                p = order[t]
                d0 = qx - points[p, 0]
                d1 = qy - points[p, 1]
                d2 = qz - points[p, 2]
                dd = d0 * d0 + d1 * d1 + d2 * d2
                if dd < r2 and (dd < best_d2[q] or (dd == best_d2[q] and p < best[q])):
                    best[q] = p
                    best_d2[q] = dd
    return best, best_d2


@njit(cache=True)
def _window_mean_kernel(points, queries, qcoords, grid_origin, cell, dims, span, order, cell_keys, table, cell_start, cell_count, r2):
    # Sums run over candidates in cell order, which is fixed for a given
    # stored point set, so repeated calls are bit-identical.
    n = queries.shape[0]
    means = np.empty((n, 3))
    counts = np.zeros(n, dtype=np.int64)
    runs = np.empty(((2 * span + 1) ** 3, 2), dtype=np.int64)
    for q in range(n):
        qx, qy, qz = queries[q, 0], queries[q, 1], queries[q, 2]
        nr = _cell_runs(qx, qy, qz, qcoords[q], grid_origin, cell, dims, span, r2, cell_keys, table, cell_start, cell_count, runs)
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        c = 0
        for k in range(nr):
            for t in range(runs[k, 0], runs[k, 1]):
                p = order[t]
                d0 = qx - points[p, 0]
                d1 = qy - points[p, 1]
                d2 = qz - points[p, 2]
                if d0 * d0 + d1 * d1 + d2 * d2 < r2:
                    s0 += points[p, 0]
                    s1 += points[p, 1]
                    s2 += points[p, 2]
                    c += 1
        counts[q] = c
        if c:
            means[q, 0] = s0 / c
            means[q, 1] = s1 / c
            means[q, 2] = s2 / c
        else:
            means[q, 0] = qx
            means[q, 1] = qy
            means[q, 2] = qz
    return means, counts


@njit(cache=True)
def csr_row_means(indptr, indices, xyz):
    """Mean of the ``xyz`` rows listed in each CSR row, summed in stored order."""
    n = indptr.shape[0] - 1
    out = np.empty((n, 3))
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        for t in range(lo, hi):
            j = indices[t]
            s0 += xyz[j, 0]
            s1 += xyz[j, 1]
            s2 += xyz[j, 2]
        k = hi - lo
        out[i, 0] = s0 / k
        out[i, 1] = s1 / k
        out[i, 2] = s2 / k
    return out


@njit(cache=True)
def scatter_rows(indptr, members, local_indptr, local_indices, out):
    """Copy a subset's CSR rows into a larger CSR, mapping local to global IDs."""
    for a in range(members.shape[0]):
        w = indptr[members[a]]
        for t in range(local_indptr[a], local_indptr[a + 1]):
            out[w] = members[local_indices[t]]
            w += 1


class SpatialHash:
    """Points bucketed into cubic cells of side ``cell``.

    Distances are compared with strict ``<``. Queries may use any radius;
    ``cell == radius`` is usually fastest on scan-like (surface) data.
    """

    def __init__(self, points: np.ndarray, cell: float):
        if not cell > 0:
            raise ValueError(f"cell size must be > 0, got {cell}")
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell = float(cell)
        if len(self.points):
            self.origin = self.points.min(axis=0)
            span = self.points.max(axis=0) - self.origin
            self.dims = np.floor(span / self.cell).astype(np.int64) + 1
        else:
            self.origin = np.zeros(3)
            self.dims = np.ones(3, dtype=np.int64)
        self.coords = self.coords_of(self.points)
        keys = (self.coords[:, 0] * self.dims[1] + self.coords[:, 1]) * self.dims[2] + self.coords[:, 2]
        self.order = np.argsort(keys, kind="stable")
        self.cell_keys, self.cell_start, self.cell_count = np.unique(
            keys[self.order], return_index=True, return_counts=True
        )
        n_grid = int(np.prod(self.dims))
        if n_grid <= _DENSE_TABLE_LIMIT:
            self.table = np.full(n_grid, -1, dtype=np.int64)
            self.table[self.cell_keys] = np.arange(len(self.cell_keys))
        else:
            self.table = np.empty(0, dtype=np.int64)

    @classmethod
    def for_radius(cls, points: np.ndarray, radius: float) -> "SpatialHash":
        return cls(points, radius)

    def __len__(self) -> int:
        return len(self.points)

    def coords_of(self, points: np.ndarray) -> np.ndarray:
        coords = np.floor((points - self.origin) / self.cell)
        # Far-away queries only need to land outside the grid.
        limit = np.iinfo(np.int32).max
        return np.clip(np.nan_to_num(coords, nan=-limit), -limit, limit).astype(np.int64)

    def _grid(self, radius):
        if not radius > 0:
            raise ValueError(f"radius must be > 0, got {radius}")
        span = max(1, math.ceil(radius / self.cell))
        return (
            self.origin, self.cell, self.dims, span, self.order,
            self.cell_keys, self.table, self.cell_start, self.cell_count, radius * radius,
        )

    def _queries(self, queries):
        queries = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        return queries, self.coords_of(queries)

    def neighbor_lists(self, radius: float, queries: np.ndarray | None = None, include_self: bool = True):
        """CSR-style (indptr, indices) of stored points within ``radius`` of each query.

        With ``queries=None`` the stored points query themselves; each row then
        lists its lower-index neighbors ascending, itself (if
        ``include_self``), then its higher-index neighbors in grid order.
        Rows for external queries are sorted by point index.
        """
        grid = self._grid(radius)
        if queries is None:
            return _symmetric_lists(self.points, self.coords, *grid, include_self)
        q, qc = self._queries(queries)
        counts = _count_kernel(self.points, q, qc, *grid)
        indptr = np.zeros(len(q) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, _fill_kernel(self.points, q, qc, *grid, indptr)

    def count_within(self, radius: float, queries: np.ndarray | None = None) -> np.ndarray:
        """Number of stored points within ``radius`` (a point counts itself)."""
        if queries is None:
            q, qc = self.points, self.coords
        else:
            q, qc = self._queries(queries)
        return _count_kernel(self.points, q, qc, *self._grid(radius))

    def self_pairs(self, radius: float):
        """Unordered pairs (i, j), i < j, closer than ``radius``, sorted by (i, j)."""
        indptr, indices = self.neighbor_lists(radius, include_self=False)
        rows = np.repeat(np.arange(len(self.points)), np.diff(indptr))
        keep = rows < indices
        i, j = rows[keep], indices[keep].astype(np.int64)
        order = np.lexsort((j, i))
        return i[order], j[order]

    def components(self, radius: float) -> np.ndarray:
        """Single-linkage components at ``radius``; labels 0..C-1 by smallest member index."""
        if len(self.points) == 0:
            return np.empty(0, dtype=np.int64)
        return _components_kernel(self.points, self.coords, *self._grid(radius))

    def nearest(self, queries: np.ndarray, radius: float):
        """Index of and distance to the nearest stored point within ``radius``.

        Index is -1 (distance inf) when nothing is in range; ties go to the
        lower index.
        """
        q, qc = self._queries(queries)
        idx, d2 = _nearest_kernel(self.points, q, qc, *self._grid(radius))
        return idx, np.sqrt(d2)

    def window_means(self, queries: np.ndarray, radius: float):
        """Mean of the stored points within ``radius`` of each query, and their count."""
        q, qc = self._queries(queries)
        return _window_mean_kernel(self.points, q, qc, *self._grid(radius))


def component_labels(n: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Connected components of an undirected edge list; labels by smallest vertex."""
    if n == 0:
        return np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(i), dtype=np.int8), (i, j)), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    uniq, first = np.unique(raw, return_index=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    return rank[raw]
