"""Sphere-shaped flight corridors.

A corridor is a chain of overlapping free-space spheres.  Each sphere is
sized by the nearest obstacle point to its center minus the drone radius.
Spheres after the first are chosen by batch sampling around a guide point:
K candidate centers are drawn from a Gaussian stretched along the direction
to the previous sphere, and the candidate maximizing a weighted sum of its
own volume and its overlap with the previous sphere wins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import BatchSampleFailed, CorridorError, EmptyWorldError, SphereRejectedError
from .spatial import clearance_kernel
from .pathsearch import GuidePath, forward_index
from .world import WorldModel


@dataclass
class SamplerConfig:
    batch_size: int = 50
    weight_radius: float = 1.0
    weight_overlap: float = 2.0
    drone_radius: float = 0.3
    min_radius: float = 0.2
    max_radius_cap: float = 10.0
    max_retries: int = 3
    max_spheres: int = 200

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (self.weight_radius > 0 and self.weight_overlap > 0):
            raise ValueError("score weights must be positive")
        if self.drone_radius < 0:
            raise ValueError("drone_radius must be non-negative")


@dataclass
class Sphere:
    center: np.ndarray
    nearest: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.nearest = np.asarray(self.nearest, dtype=float)
        self.radius = float(self.radius)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3

    def contains(self, p, tol: float = 0.0) -> bool:
        return float(np.linalg.norm(np.asarray(p) - self.center)) <= self.radius + tol

    def to_dict(self):
        return {"center": self.center.tolist(), "radius": self.radius, "nearest": self.nearest.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["center"], d["nearest"], d["radius"])


@dataclass
class Corridor:
    spheres: list = field(default_factory=list)
    reused_prefix_len: int = 0

    def __post_init__(self):
        if self.reused_prefix_len > len(self.spheres):
            raise ValueError("reused prefix longer than the corridor")

    def __len__(self):
        return len(self.spheres)

    def __getitem__(self, i):
        return self.spheres[i]

    @property
    def centers(self) -> np.ndarray:
        return np.array([s.center for s in self.spheres]).reshape(-1, 3)

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.spheres])

    def overlaps(self) -> np.ndarray:
        """Lens volume of every consecutive sphere pair."""
        c, r = self.centers, self.radii
        d = np.linalg.norm(np.diff(c, axis=0), axis=1)
        return lens_volumes(r[:-1], r[1:], d)

    def to_json(self, path=None):
        text = json.dumps([s.to_dict() for s in self.spheres], indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path):
        text = str(text_or_path)
        if not text.lstrip().startswith("["):
            text = Path(text_or_path).read_text()
        return cls([Sphere.from_dict(d) for d in json.loads(text)])


def sphere_volume(r):
    return 4.0 / 3.0 * np.pi * np.asarray(r, dtype=float) ** 3


def lens_volumes(ra, rb, d) -> np.ndarray:
    """Vectorized sphere-sphere intersection volume."""
    ra, rb, d = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (ra, rb, d)))
    out = np.zeros(ra.shape)
    contained = d <= np.abs(ra - rb)
    out[contained] = sphere_volume(np.minimum(ra, rb)[contained])
    part = ~contained & (d < ra + rb)
    a, b, dd = ra[part], rb[part], d[part]
    out[part] = np.pi * (a + b - dd) ** 2 * (dd**2 + 2 * dd * (a + b) - 3 * (a - b) ** 2) / (12 * dd)
    return out


def lens_volume(a: Sphere, b: Sphere) -> float:
    d = float(np.linalg.norm(a.center - b.center))
    return float(lens_volumes(a.radius, b.radius, d))


def score(candidate: Sphere, previous: Sphere, cfg: SamplerConfig) -> float:
    return cfg.weight_radius * candidate.volume + cfg.weight_overlap * lens_volume(candidate, previous)


def _radius(dist, cfg: SamplerConfig):
    return np.minimum(dist - cfg.drone_radius, cfg.max_radius_cap)


def generate_one_sphere(world: WorldModel, center, cfg: SamplerConfig) -> Sphere:
    """Largest obstacle-free sphere around ``center``.

    Raises:
        SphereRejectedError: the radius is below ``cfg.min_radius``.
    """
    center = np.asarray(center, dtype=float)
    bound = cfg.max_radius_cap + cfg.drone_radius
    try:
        nearest, dist = world.clearance_many(center, bound)
    except EmptyWorldError:
        sentinel = center + np.array([bound, 0.0, 0.0])
        return Sphere(center, sentinel, cfg.max_radius_cap)
    nearest, dist = nearest[0], dist[0]
    if dist > bound:
        nearest = center + np.array([cfg.max_radius_cap + cfg.drone_radius, 0.0, 0.0])
    r = float(_radius(dist, cfg))
    if r < cfg.min_radius:
        raise SphereRejectedError(center, r)
    return Sphere(center, nearest, r)


@numba.njit(cache=True)
def _frame(prev_c, guide, prev_r):
    axes = np.eye(3)
    d = prev_c - guide
    dist = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    if dist < 1e-6:
        return axes, np.full(3, 0.25 * prev_r)
    u = d / dist
    # any unit vector orthogonal to u, then complete the right-handed frame
    if abs(u[2]) < 0.9:
        v = np.array([u[1], -u[0], 0.0])
    else:
        v = np.array([0.0, u[2], -u[1]])
    v /= math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    axes[0] = u
    axes[1] = v
    axes[2, 0] = u[1] * v[2] - u[2] * v[1]
    axes[2, 1] = u[2] * v[0] - u[0] * v[2]
    axes[2, 2] = u[0] * v[1] - u[1] * v[0]
    sx = 0.5 * dist
    return axes, np.array([sx, 0.5 * sx, 0.5 * sx])


def sampler_frame(previous_center, guide_point, previous_radius):
    """Axes and standard deviations of the candidate distribution.

    Returns ``(axes, sigmas)`` where the rows of ``axes`` are orthonormal and
    the first one points from the guide point to the previous center.  When
    the two coincide the distribution is isotropic with a quarter of the
    previous radius.
    """
    return _frame(
        np.asarray(previous_center, dtype=float), np.asarray(guide_point, dtype=float), float(previous_radius)
    )


@numba.njit(cache=True)
def _candidates(rng, prev_c, prev_r, guide, k, shrink=1.0):
    axes, sig = _frame(prev_c, guide, prev_r)
    sig *= shrink
    z = rng.standard_normal((k, 3))
    out = np.empty((k, 3))
    for i in range(k):
        for a in range(3):
            out[i, a] = guide[a] + z[i, 0] * sig[0] * axes[0, a] + z[i, 1] * sig[1] * axes[1, a] + z[i, 2] * sig[2] * axes[2, a]
    return out


def sample_candidates(rng, previous: Sphere, guide_point, k: int) -> np.ndarray:
    return _candidates(rng, previous.center, previous.radius, np.asarray(guide_point, dtype=float), int(k))


@numba.njit(cache=True)
def _lens(ra, rb, d):
    if d >= ra + rb:
        return 0.0
    if d <= abs(ra - rb):
        m = min(ra, rb)
        return 4.0 / 3.0 * math.pi * m**3
    return math.pi * (ra + rb - d) ** 2 * (d * d + 2 * d * (ra + rb) - 3 * (ra - rb) ** 2) / (12 * d)


@numba.njit(cache=True)
def _score(r, prev_r, d, w_r, w_v):
    return w_r * 4.0 / 3.0 * math.pi * r**3 + w_v * _lens(r, prev_r, d)


@numba.njit(cache=True)
def _best_candidate(centers, prev_c, prev_r, guide, pts, start, origin, h, dims, solid, lo, hi,
                    w_r, w_v, r_d, min_r, cap, strict=True, slack=0.0):
    # The score grows with the radius, so once a best candidate exists every
    # other one needs a minimum radius to compete.  That radius (plus the
    # hard constraints) becomes a clearance floor that ends the nearest
    # search early for candidates that cannot win.
    bound = cap + r_d
    best = -1
    best_score = -np.inf
    best_gap = np.inf
    best_r = 0.0
    best_n = np.empty(3)
    near = np.empty(3)
    for i in range(centers.shape[0]):
        c = centers[i]
        d_prev = math.sqrt((c[0] - prev_c[0]) ** 2 + (c[1] - prev_c[1]) ** 2 + (c[2] - prev_c[2]) ** 2)
        to_guide = math.sqrt((c[0] - guide[0]) ** 2 + (c[1] - guide[1]) ** 2 + (c[2] - guide[2]) ** 2)
        # center must leave the previous sphere; the sphere must cover the
        # guide point (up to ``slack``) and overlap the previous sphere
        if strict and d_prev <= prev_r:
            continue
        cover = to_guide - slack
        need = max(min_r, cover, d_prev - prev_r)
        if need > cap:
            continue
        if best >= 0:
            if _score(cap, prev_r, d_prev, w_r, w_v) < best_score:
                continue
            a, b = need, cap
            if _score(a, prev_r, d_prev, w_r, w_v) < best_score:
                for _ in range(40):
                    m = 0.5 * (a + b)
                    if _score(m, prev_r, d_prev, w_r, w_v) < best_score:
                        a = m
                    else:
                        b = m
                need = a
        dist = clearance_kernel(pts, start, origin, h, dims, c, bound, solid, lo, hi, near, need + r_d)
        if dist > bound:
            near[:] = c
            near[0] += bound
        r = min(dist - r_d, cap)
        if r < min_r or r < cover:
            continue
        overlap = _lens(r, prev_r, d_prev)
        if overlap <= 0.0:
            continue
        sc = w_r * 4.0 / 3.0 * math.pi * r**3 + w_v * overlap
        if sc > best_score or (sc == best_score and to_guide < best_gap):
            best, best_score, best_gap, best_r = i, sc, to_guide, r
            best_n[:] = near
    return best, best_r, best_n


def batch_sample(world: WorldModel, previous: Sphere, guide_point, cfg: SamplerConfig, rng) -> Sphere:
    """Best-scoring sphere among ``cfg.batch_size`` sampled candidates.

    Candidates are discarded when they are below ``cfg.min_radius``, do not
    overlap ``previous``, do not cover the guide point, or are centered inside
    ``previous`` (no progress).  Ties in score go to the candidate closest to
    the guide point.

    Raises:
        BatchSampleFailed: every candidate was discarded.
    """
    guide = np.asarray(guide_point, dtype=float)
    centers = sample_candidates(rng, previous, guide, cfg.batch_size)
    best, r, near = _best_candidate(
        centers, previous.center, previous.radius, guide, *world.kernel_args(),
        cfg.weight_radius, cfg.weight_overlap, cfg.drone_radius, cfg.min_radius, cfg.max_radius_cap,
    )
    if best < 0:
        raise BatchSampleFailed(f"all {cfg.batch_size} candidates rejected")
    return Sphere(centers[best], near, r)


@numba.njit(cache=True)
def _grow(rng, waypoints, goal, centers, nearest, radii, n, k, max_retries, pts, start, origin, h, dims,
          solid, lo, hi, w_r, w_v, r_d, min_r, cap):
    # fills centers/nearest/radii from row n on; returns (count, status, guide
    # index) with status 0 = done, 1 = sampling failed, 2 = out of rows
    cursor = 0
    m = waypoints.shape[0]
    while True:
        c = centers[n - 1]
        r = radii[n - 1]
        gd = goal - c
        if math.sqrt(gd[0] * gd[0] + gd[1] * gd[1] + gd[2] * gd[2]) <= r:
            return n, 0, -1
        if n >= centers.shape[0]:
            return n, 2, -1
        # skip the part of the path already behind the current sphere, then
        # aim at the first waypoint beyond it
        j = cursor
        while j < m and _dist(waypoints[j], c) > r:
            j += 1
        if j < m:
            cursor = j
        g = m - 1
        for j in range(cursor, m):
            if _dist(waypoints[j], c) > r:
                g = j
                break
        guide = waypoints[g]
        ok = False
        gap = _dist(guide, c) - r
        for attempt in range(max_retries):
            # each retry halves the spread.  The second-to-last lets the
            # center stay inside the current sphere: a guide point hugging an
            # obstacle may only admit small spheres centered right next to
            # it.  The last only asks the new sphere to get 10% closer to
            # covering the guide point than the current one.
            cand = _candidates(rng, c, r, guide, k, 0.5**attempt)
            strict = attempt < max(max_retries - 2, 1)
            slack = 0.9 * gap if attempt == max_retries - 1 and max_retries > 2 else 0.0
            best, br, bn = _best_candidate(cand, c, r, guide, pts, start, origin, h, dims, solid, lo, hi,
                                           w_r, w_v, r_d, min_r, cap, strict, slack)
            if best >= 0:
                centers[n] = cand[best]
                nearest[n] = bn
                radii[n] = br
                n += 1
                ok = True
                break
        if not ok:
            return n, 1, g


@numba.njit(cache=True)
def _dist(a, b):
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def generate_corridor(
    world: WorldModel,
    path: GuidePath,
    start,
    goal,
    cfg: SamplerConfig,
    rng=None,
    prefix=None,
) -> Corridor:
    """Grow spheres along ``path`` from ``start`` until one contains ``goal``.

    Each new sphere is sampled around the first guide waypoint outside the
    current sphere, searching forward from the last waypoint known to be
    covered.

    Args:
        prefix: spheres to continue from instead of a fresh sphere at
            ``start``; they become the corridor's reused prefix.

    Raises:
        SphereRejectedError: no usable sphere fits at ``start``.
        CorridorError: sampling failed ``cfg.max_retries`` times in a row or
            the corridor exceeded ``cfg.max_spheres``.
    """
    rng = np.random.default_rng() if rng is None else rng
    init = list(prefix) if prefix else [generate_one_sphere(world, start, cfg)]
    cap = max(cfg.max_spheres, len(init))
    centers = np.zeros((cap, 3))
    nearest = np.zeros((cap, 3))
    radii = np.zeros(cap)
    for i, sp in enumerate(init):
        centers[i], nearest[i], radii[i] = sp.center, sp.nearest, sp.radius
    n, status, g = _grow(
        rng, path.waypoints, np.asarray(goal, dtype=float), centers, nearest, radii, len(init),
        cfg.batch_size, cfg.max_retries, *world.kernel_args(),
        cfg.weight_radius, cfg.weight_overlap, cfg.drone_radius, cfg.min_radius, cfg.max_radius_cap,
    )
    if status == 1:
        raise CorridorError(f"batch sampling failed {cfg.max_retries} times near {path.waypoints[g].tolist()}")
    if status == 2:
        raise CorridorError(f"corridor exceeded {cfg.max_spheres} spheres")
    spheres = init + [Sphere(centers[i], nearest[i], radii[i]) for i in range(len(init), n)]
    return Corridor(spheres, reused_prefix_len=len(prefix) if prefix else 0)
