"""Grid A* guide paths over the inflated occupancy view of a world."""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass

import numba
import numpy as np

from .errors import NoPathError
from .world import WorldModel

_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1) if (dx, dy, dz) != (0, 0, 0)],
    dtype=np.int64,
)
SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)
_STEP = np.sqrt((_OFFSETS**2).sum(axis=1)).astype(np.float64)


@dataclass
class GuidePath:
    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.waypoints)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def point_at(self, arclength: float) -> np.ndarray:
        """Point at the given arc length from the first waypoint (clamped)."""
        seg = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        if len(seg) == 0 or arclength <= 0:
            return self.waypoints[0].copy()
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if arclength >= cum[-1]:
            return self.waypoints[-1].copy()
        i = int(np.searchsorted(cum, arclength, side="right") - 1)
        frac = (arclength - cum[i]) / seg[i]
        return self.waypoints[i] + frac * (self.waypoints[i + 1] - self.waypoints[i])

    def truncated(self, arclength: float) -> "GuidePath":
        """Prefix of the path up to ``arclength``, ending exactly there."""
        seg = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if arclength >= cum[-1]:
            return GuidePath(self.waypoints.copy())
        keep = self.waypoints[cum < arclength]
        return GuidePath(np.vstack([keep, self.point_at(arclength)]))

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "z"])
            writer.writerows(self.waypoints.tolist())


@numba.njit(cache=True)
def _octile(dx, dy, dz):
    # exact 26-connected free-space distance; admissible and never below
    # the Euclidean bound
    a = abs(dx)
    b = abs(dy)
    c = abs(dz)
    lo = min(a, b, c)
    hi = max(a, b, c)
    mid = a + b + c - lo - hi
    return (SQRT3 - SQRT2) * lo + (SQRT2 - 1.0) * mid + 1.0 * hi


@numba.njit(cache=True)
def _astar_kernel(occ, start, goal, offsets, steps, g, parent, seen, done, stamp):
    # seen/done hold the stamp of the search that last touched a cell, so the
    # scratch arrays never need clearing between searches
    nx, ny, nz = occ.shape
    s = (start[0] * ny + start[1]) * nz + start[2]
    t = (goal[0] * ny + goal[1]) * nz + goal[2]
    g[s] = 0.0
    seen[s] = stamp
    h0 = _octile(start[0] - goal[0], start[1] - goal[1], start[2] - goal[2])
    heap = [(h0, h0, s)]
    while len(heap) > 0:
        f, h, cur = heapq.heappop(heap)
        if done[cur] == stamp:
            continue
        done[cur] = stamp
        if cur == t:
            break
        cx = cur // (ny * nz)
        cy = (cur // nz) % ny
        cz = cur % nz
        for k in range(offsets.shape[0]):
            x = cx + offsets[k, 0]
            y = cy + offsets[k, 1]
            z = cz + offsets[k, 2]
            if x < 0 or y < 0 or z < 0 or x >= nx or y >= ny or z >= nz:
                continue
            if occ[x, y, z]:
                continue
            nb = (x * ny + y) * nz + z
            if done[nb] == stamp:
                continue
            cand = g[cur] + steps[k]
            if seen[nb] != stamp or cand < g[nb]:
                seen[nb] = stamp
                g[nb] = cand
                parent[nb] = cur
                hn = _octile(x - goal[0], y - goal[1], z - goal[2])
                heapq.heappush(heap, (cand + hn, hn, nb))
    if done[t] != stamp:
        return np.empty((0, 3), dtype=np.int64), np.inf
    count = 1
    cur = t
    while cur != s:
        cur = parent[cur]
        count += 1
    out = np.empty((count, 3), dtype=np.int64)
    cur = t
    for i in range(count - 1, -1, -1):
        out[i, 0] = cur // (ny * nz)
        out[i, 1] = (cur // nz) % ny
        out[i, 2] = cur % nz
        cur = parent[cur]
    return out, g[t]


class _Scratch:
    """Per-grid-shape search buffers reused across A* calls."""

    def __init__(self, n):
        self.g = np.empty(n)
        self.parent = np.empty(n, dtype=np.int64)
        self.seen = np.zeros(n, dtype=np.int64)
        self.done = np.zeros(n, dtype=np.int64)
        self.stamp = 0


_scratch: dict = {}


def astar(world: WorldModel, start, goal, allow_occupied_start: bool = False) -> GuidePath:
    """26-connected A* between the cells of ``start`` and ``goal``.

    Edge costs are Euclidean cell-center distances and the heuristic is the
    straight-line distance, so the path is optimal on the grid.  The first and
    last waypoints are the exact ``start``/``goal`` cell centers.

    Raises:
        NoPathError: goal cell blocked, start cell blocked (unless
            ``allow_occupied_start``), or no connecting free path.
    """
    s = world.cell_of(start)
    t = world.cell_of(goal)
    if world.is_occupied(t):
        raise NoPathError(f"goal cell {t.tolist()} is occupied")
    if not world.in_bounds(s) or (world.is_occupied(s) and not allow_occupied_start):
        raise NoPathError(f"start cell {s.tolist()} is occupied")
    buf = _scratch.get(world.shape)
    if buf is None:
        buf = _scratch[world.shape] = _Scratch(world.occupancy.size)
    buf.stamp += 1
    cells, _ = _astar_kernel(
        world.occupancy, s, t, _OFFSETS, _STEP, buf.g, buf.parent, buf.seen, buf.done, buf.stamp
    )
    if len(cells) == 0:
        raise NoPathError("start and goal are not connected")
    return GuidePath(world.cell_center(cells))


def path_cost(path: GuidePath) -> float:
    return path.length


def forward_index(path: GuidePath, center, radius, start: int = 0) -> int:
    """Index of the first waypoint at or after ``start`` lying outside the sphere.

    Falls back to the last waypoint when every remaining waypoint is inside.
    """
    pts = path.waypoints[start:]
    outside = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1) > radius
    hits = np.flatnonzero(outside)
    if len(hits) == 0:
        return len(path) - 1
    return start + int(hits[0])


def forward_point(path: GuidePath, sphere, start: int = 0) -> np.ndarray:
    """First waypoint in path order outside ``sphere`` (else the last one)."""
    return path.waypoints[forward_index(path, sphere.center, sphere.radius, start)].copy()
