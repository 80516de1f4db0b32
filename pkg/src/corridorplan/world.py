"""Obstacle maps, procedural forests and the simulated range sensor.

A :class:`WorldModel` keeps one obstacle point cloud behind two views:
a spatial index for exact nearest-obstacle queries and an inflated voxel grid
for grid search.  Both are refreshed by :meth:`WorldModel.merge`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import EmptyWorldError
from .spatial import GridIndex

_EMPTY_INDEX = (np.empty((0, 3)), np.zeros(2, dtype=np.int64), np.zeros(3), 1.0, np.ones(3, dtype=np.int64))
_KEY_OFFSET = 1 << 20
_KEY_BASE = 1 << 21


@dataclass
class ForestSpec:
    length: float = 60.0
    width: float = 30.0
    density: float = 1.0 / 25.0
    tree_radius: float = 0.3
    tree_height: float = 5.0
    points_per_m2: float = 100.0
    seed: int = 0
    clearing_radius: float = 1.5

    def __post_init__(self):
        for name in ("length", "width", "density", "tree_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ForestSpec.{name} must be positive")

    @property
    def start_xy(self):
        return np.array([-self.length / 2.0, 0.0])

    @property
    def goal_xy(self):
        return np.array([self.length / 2.0, 0.0])

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def from_json(cls, path):
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class SensorSpec:
    range: float = 8.0
    rate_hz: float = 30.0

    def __post_init__(self):
        if not self.range > 0 or not self.rate_hz > 0:
            raise ValueError("sensor range and rate must be positive")

    @property
    def period(self) -> float:
        return 1.0 / self.rate_hz


def _voxel_keys(idx: np.ndarray) -> np.ndarray:
    idx = idx.astype(np.int64) + _KEY_OFFSET
    return (idx[:, 0] * _KEY_BASE + idx[:, 1]) * _KEY_BASE + idx[:, 2]


@numba.njit(cache=True)
def _mark_inflated(occ, rel, offsets, r2):
    """Mark every cell whose box lies within ``sqrt(r2)`` (cell units) of a point."""
    nx, ny, nz = occ.shape
    for i in range(rel.shape[0]):
        px, py, pz = rel[i, 0], rel[i, 1], rel[i, 2]
        bx, by, bz = math.floor(px), math.floor(py), math.floor(pz)
        for k in range(offsets.shape[0]):
            cx = bx + offsets[k, 0]
            cy = by + offsets[k, 1]
            cz = bz + offsets[k, 2]
            if cx < 0 or cy < 0 or cz < 0 or cx >= nx or cy >= ny or cz >= nz:
                continue
            # distance from the point to the cell box, per axis
            gx = max(cx - px, 0.0) + max(px - (cx + 1), 0.0)
            gy = max(cy - py, 0.0) + max(py - (cy + 1), 0.0)
            gz = max(cz - pz, 0.0) + max(pz - (cz + 1), 0.0)
            if gx * gx + gy * gy + gz * gz <= r2:
                occ[int(cx), int(cy), int(cz)] = True


class WorldModel:
    """Obstacle point cloud with a spatial index and an inflated occupancy grid.

    Args:
        bounds: ``(lo, hi)`` corners of the region covered by the occupancy
            grid.  Cells outside report occupied.
        voxel_resolution: edge length of grid cells, also the point
            deduplication resolution.
        inflation: obstacle inflation radius for the occupancy view
            (normally the drone radius).
        points: optional initial cloud, merged on construction.
        solid_bounds: treat the faces of ``bounds`` as obstacle surfaces
            (ground, ceiling, geofence) in :meth:`clearance_many` and in the
            occupancy grid.  Plain :meth:`nearest` queries ignore them.
    """

    def __init__(self, bounds, voxel_resolution=0.2, inflation=0.3, points=None, solid_bounds=False):
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        if np.any(hi <= lo):
            raise ValueError("bounds must have hi > lo on every axis")
        self.lo = lo
        self.hi = hi
        self.resolution = float(voxel_resolution)
        self.inflation = float(inflation)
        self.shape = tuple(int(math.ceil((h - l) / self.resolution - 1e-9)) for l, h in zip(lo, hi))
        self.occupancy = np.zeros(self.shape, dtype=bool)
        self.points = np.empty((0, 3))
        self._keys = np.empty(0, dtype=np.int64)
        self._tree = None
        self._offsets = self._inflation_offsets()
        self.solid_bounds = bool(solid_bounds)
        if self.solid_bounds:
            self._block_margins()
        if points is not None:
            self.merge(points)

    # -- bookkeeping -------------------------------------------------------

    def __len__(self):
        return len(self.points)

    def _inflation_offsets(self):
        reach = int(math.ceil(self.inflation / self.resolution))
        rng = np.arange(-reach, reach + 1)
        return np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)

    def _block_margins(self):
        k = int(math.floor(self.inflation / self.resolution)) + 1
        for axis, n in enumerate(self.shape):
            sl = [slice(None)] * 3
            sl[axis] = slice(0, min(k, n))
            self.occupancy[tuple(sl)] = True
            sl[axis] = slice(max(n - k, 0), n)
            self.occupancy[tuple(sl)] = True

    def copy(self) -> "WorldModel":
        """Snapshot suitable for planning while the original keeps merging."""
        other = WorldModel.__new__(WorldModel)
        other.__dict__.update(self.__dict__)
        other.occupancy = self.occupancy.copy()
        return other

    def cell_of(self, p) -> np.ndarray:
        return np.floor((np.asarray(p, dtype=float) - self.lo) / self.resolution).astype(np.int64)

    def cell_center(self, cell) -> np.ndarray:
        return self.lo + (np.asarray(cell, dtype=float) + 0.5) * self.resolution

    def in_bounds(self, cell) -> bool:
        cell = np.asarray(cell)
        return bool(np.all(cell >= 0) and np.all(cell < np.asarray(self.shape)))

    # -- mapping -----------------------------------------------------------

    def merge(self, points) -> int:
        """Add points not already represented at voxel resolution.

        Returns the number of points actually added.  The spatial index is
        rebuilt whenever anything was added.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return 0
        if not np.all(np.isfinite(pts)):
            raise ValueError("obstacle points must be finite")
        keys = _voxel_keys(np.floor(pts / self.resolution))
        keys, first = np.unique(keys, return_index=True)
        fresh = ~np.isin(keys, self._keys, assume_unique=True)
        if not fresh.any():
            return 0
        new_pts = pts[np.sort(first[fresh])]
        self._keys = np.union1d(self._keys, keys[fresh])
        self.points = np.vstack([self.points, new_pts])
        self._tree = GridIndex(self.points)
        self._inflate(new_pts)
        return len(new_pts)

    def _inflate(self, pts):
        rel = np.ascontiguousarray((pts - self.lo) / self.resolution)
        _mark_inflated(self.occupancy, rel, self._offsets, (self.inflation / self.resolution) ** 2)

    # -- queries -----------------------------------------------------------

    def nearest(self, query):
        """Exact nearest obstacle point and its distance."""
        if self._tree is None:
            raise EmptyWorldError("world has no obstacle points")
        idx, dist = self._tree.query(np.asarray(query, dtype=float))
        return self.points[idx[0]], float(dist[0])

    def nearest_many(self, queries):
        """Vectorized :meth:`nearest`; returns ``(points, distances)``."""
        if self._tree is None:
            raise EmptyWorldError("world has no obstacle points")
        idx, dist = self._tree.query(np.asarray(queries, dtype=float).reshape(-1, 3))
        return self.points[idx], dist

    def clearance_many(self, queries, bound=np.inf):
        """Nearest obstacle (cloud point or solid bound face) for each query.

        Distances are negative for queries outside solid bounds.  Cloud
        distances above ``bound`` are not exact and come with an arbitrary
        (possibly sentinel) nearest point.
        """
        q = np.asarray(queries, dtype=float).reshape(-1, 3)
        if self._tree is None:
            if not self.solid_bounds:
                raise EmptyWorldError("world has no obstacle points")
            nearest, dist = np.zeros_like(q), np.full(len(q), np.inf)
        else:
            idx, dist = self._tree.query(q, bound)
            nearest = self.points[np.maximum(idx, 0)]
        if self.solid_bounds:
            gaps = np.concatenate([q - self.lo, self.hi - q], axis=1)
            face = np.argmin(gaps, axis=1)
            wall = gaps[np.arange(len(q)), face]
            closer = wall < dist
            if closer.any():
                axis = face[closer] % 3
                plane = np.where(face[closer] < 3, self.lo[axis], self.hi[axis])
                proj = q[closer].copy()
                proj[np.arange(len(proj)), axis] = plane
                nearest = nearest.copy()
                nearest[closer] = proj
                dist = np.where(closer, wall, dist)
        return nearest, dist

    def kernel_args(self):
        """Arrays describing this world for compiled clearance queries."""
        if self._tree is None:
            t = _EMPTY_INDEX
            pts, start, origin, cell, dims = t
        else:
            t = self._tree
            pts, start, origin, cell, dims = t.points, t.start, t.origin, t.cell, t.dims
        return pts, start, origin, cell, dims, self.solid_bounds, self.lo, self.hi

    def within(self, center, radius) -> np.ndarray:
        if self._tree is None:
            return np.empty((0, 3))
        return self.points[self._tree.query_ball_point(center, radius)]

    def is_occupied(self, cell) -> bool:
        cell = np.asarray(cell, dtype=np.int64)
        if not self.in_bounds(cell):
            return True
        return bool(self.occupancy[tuple(cell)])

    # -- I/O -----------------------------------------------------------------

    def dump_csv(self, path):
        write_points_csv(path, self.points)


def nearest_obstacle(world: WorldModel, query):
    return world.nearest(query)


def voxel_occupancy(world: WorldModel, cell) -> bool:
    """True when ``cell`` is occupied (or outside the grid)."""
    return world.is_occupied(cell)


def sense(world_truth: WorldModel, pose, spec: SensorSpec) -> np.ndarray:
    """Omniscient range sensor: every ground-truth point within range."""
    return world_truth.within(pose, spec.range)


def forest_bounds(spec: ForestSpec, margin: float = 2.0):
    lo = (-spec.length / 2 - margin, -spec.width / 2, 0.0)
    hi = (spec.length / 2 + margin, spec.width / 2, spec.tree_height)
    return lo, hi


def _cylinder_surface(rng, center_xy, radius, height, density):
    n = max(1, int(round(density * 2 * math.pi * radius * height)))
    theta = rng.uniform(0.0, 2 * math.pi, n)
    z = rng.uniform(0.0, height, n)
    return np.column_stack(
        [center_xy[0] + radius * np.cos(theta), center_xy[1] + radius * np.sin(theta), z]
    )


def generate_forest(spec: ForestSpec, voxel_resolution=0.2, inflation=0.3, solid_bounds=True):
    """Poisson forest of vertical cylinders over the ``length x width`` rectangle.

    Trees whose surface comes within ``spec.clearing_radius`` of the start or
    goal column (``(-length/2, 0)`` and ``(length/2, 0)``) are removed.

    Returns:
        ``(world, tree_centers)`` where ``tree_centers`` is ``(n, 2)``.
    """
    rng = np.random.default_rng(spec.seed)
    count = rng.poisson(spec.density * spec.length * spec.width)
    xs = rng.uniform(-spec.length / 2, spec.length / 2, count)
    ys = rng.uniform(-spec.width / 2, spec.width / 2, count)
    centers = np.column_stack([xs, ys])
    keep = np.ones(count, dtype=bool)
    for clearing in (spec.start_xy, spec.goal_xy):
        keep &= np.linalg.norm(centers - clearing, axis=1) >= spec.clearing_radius + spec.tree_radius
    centers = centers[keep]
    clouds = [
        _cylinder_surface(rng, c, spec.tree_radius, spec.tree_height, spec.points_per_m2)
        for c in centers
    ]
    points = np.vstack(clouds) if clouds else np.empty((0, 3))
    world = WorldModel(forest_bounds(spec), voxel_resolution, inflation, solid_bounds=solid_bounds)
    # ground truth keeps every sampled point; dedup only applies to merged maps
    world.points = points
    world._tree = GridIndex(points) if len(points) else None
    if len(points):
        world._keys = np.unique(_voxel_keys(np.floor(points / world.resolution)))
        world._inflate(points)
    return world, centers


def write_points_csv(path, points):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z"])
        writer.writerows(np.asarray(points).tolist())


def read_points_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data.reshape(-1, 3)
