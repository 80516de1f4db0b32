"""Uniform-grid spatial index with exact nearest-neighbor and range queries.

Points are bucketed into cubic cells stored in CSR order.  A nearest query
scans Chebyshev shells of cells around the query cell and stops once the
best distance found cannot be beaten by any farther shell, so results are
exact.  An optional distance bound ends the scan early in empty space.
"""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True)
def _scan_shell(pts, start, origin, h, dims, q, qc, k, best_d2, best_i, floor2):
    nx, ny, nz = dims[0], dims[1], dims[2]
    for ix in range(max(qc[0] - k, 0), min(qc[0] + k, nx - 1) + 1):
        edge_x = abs(ix - qc[0]) == k
        for iy in range(max(qc[1] - k, 0), min(qc[1] + k, ny - 1) + 1):
            edge = edge_x or abs(iy - qc[1]) == k
            iz = max(qc[2] - k, 0)
            iz_end = min(qc[2] + k, nz - 1)
            while iz <= iz_end:
                if not edge and abs(iz - qc[2]) != k:
                    # interior of the cube was scanned by earlier shells
                    iz = qc[2] + k
                    continue
                cell = (ix * ny + iy) * nz + iz
                for j in range(start[cell], start[cell + 1]):
                    dx = pts[j, 0] - q[0]
                    dy = pts[j, 1] - q[1]
                    dz = pts[j, 2] - q[2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best_d2:
                        best_d2 = d2
                        best_i = j
                        if d2 < floor2:
                            return best_d2, best_i
                iz += 1
    return best_d2, best_i


@numba.njit(cache=True)
def _nearest_one(pts, start, origin, h, dims, q, bound, floor=-1.0):
    # a point closer than ``floor`` ends the scan early (inexact result); the
    # caller uses that to drop queries that need at least this much clearance
    qc = np.empty(3, dtype=np.int64)
    for a in range(3):
        qc[a] = int(math.floor((q[a] - origin[a]) / h))
    # shells beyond kmax lie entirely outside the grid
    kmax = 0
    for a in range(3):
        kmax = max(kmax, abs(qc[a]), abs(qc[a] - (dims[a] - 1)))
    best_d2 = np.inf
    best_i = -1
    floor2 = floor * floor if floor > 0 else -1.0
    for k in range(kmax + 1):
        best_d2, best_i = _scan_shell(pts, start, origin, h, dims, q, qc, k, best_d2, best_i, floor2)
        reach = k * h
        if best_d2 <= reach * reach or reach > bound or best_d2 < floor2:
            break
    return best_i, math.sqrt(best_d2)


@numba.njit(cache=True)
def _nearest_many(pts, start, origin, h, dims, queries, bound):
    n = queries.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for i in range(n):
        idx[i], dist[i] = _nearest_one(pts, start, origin, h, dims, queries[i], bound)
    return idx, dist


@numba.njit(cache=True)
def clearance_kernel(pts, start, origin, h, dims, q, bound, solid, lo, hi, nearest, floor=-1.0):
    """Distance to the nearest cloud point or solid bound face.

    Writes the nearest obstacle point into ``nearest`` (a projected face point
    when a face is closer) and returns the distance.  ``pts`` may be empty.
    Any distance below ``floor`` may be returned as soon as it is found.
    """
    best = np.inf
    if solid:
        for a in range(3):
            for face, gap in ((lo[a], q[a] - lo[a]), (hi[a], hi[a] - q[a])):
                if gap < best:
                    best = gap
                    nearest[:] = q
                    nearest[a] = face
        if best < floor:
            return best
    if pts.shape[0] > 0:
        j, d = _nearest_one(pts, start, origin, h, dims, q, min(bound, best), floor)
        if j >= 0 and d < best:
            best = d
            nearest[:] = pts[j]
    return best


@numba.njit(cache=True)
def _within(pts, start, origin, h, dims, q, radius):
    lo = np.empty(3, dtype=np.int64)
    hi = np.empty(3, dtype=np.int64)
    for a in range(3):
        lo[a] = max(int(math.floor((q[a] - radius - origin[a]) / h)), 0)
        hi[a] = min(int(math.floor((q[a] + radius - origin[a]) / h)), dims[a] - 1)
    r2 = radius * radius
    out = []
    ny, nz = dims[1], dims[2]
    for ix in range(lo[0], hi[0] + 1):
        for iy in range(lo[1], hi[1] + 1):
            for iz in range(lo[2], hi[2] + 1):
                cell = (ix * ny + iy) * nz + iz
                for j in range(start[cell], start[cell + 1]):
                    dx = pts[j, 0] - q[0]
                    dy = pts[j, 1] - q[1]
                    dz = pts[j, 2] - q[2]
                    if dx * dx + dy * dy + dz * dz <= r2:
                        out.append(j)
    res = np.empty(len(out), dtype=np.int64)
    for i in range(len(out)):
        res[i] = out[i]
    return res


class GridIndex:
    """Exact nearest-neighbor index over a static point set.

    Args:
        points: ``(n, 3)`` array, ``n >= 1``.
        cell: bucket edge length in meters.
    """

    def __init__(self, points, cell: float = 1.0):
        pts = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("GridIndex needs at least one point")
        self.cell = float(cell)
        self.origin = pts.min(axis=0)
        ijk = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        self.dims = ijk.max(axis=0) + 1
        flat = (ijk[:, 0] * self.dims[1] + ijk[:, 1]) * self.dims[2] + ijk[:, 2]
        order = np.argsort(flat, kind="stable")
        self.order = order
        self.points = pts[order]
        counts = np.bincount(flat, minlength=int(np.prod(self.dims)))
        self.start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def query(self, queries, bound: float = np.inf):
        """Nearest point index (into the original array) and distance.

        With a finite ``bound``, a query with no point within ``bound`` gets
        some distance above ``bound`` (not necessarily the exact one), or
        ``(-1, inf)`` if nothing was scanned.
        """
        q = np.ascontiguousarray(queries, dtype=float).reshape(-1, 3)
        idx, dist = _nearest_many(self.points, self.start, self.origin, self.cell, self.dims, q, float(bound))
        found = idx >= 0
        out = np.full(len(q), -1, dtype=np.int64)
        out[found] = self.order[idx[found]]
        return out, dist

    def query_ball_point(self, center, radius: float) -> np.ndarray:
        q = np.asarray(center, dtype=float).reshape(3)
        idx = _within(self.points, self.start, self.origin, self.cell, self.dims, q, float(radius))
        return np.sort(self.order[idx])
