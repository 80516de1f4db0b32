"""Corridor-constrained trajectory optimization over waypoints and durations."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..corridor import Corridor
from .cost import ACCELERATION, COLLISION, ENERGY, TIME, VELOCITY, cost_kernel, effort_curvature, objective
from .lbfgs import STATUS_MESSAGES, lbfgs_nb
from .minco import Trajectory, _as_state

TAU_FLOOR = math.log(1e-2)


@dataclass
class OptimizerConfig:
    """Weights, limits and solver settings.

    ``time_prescale`` > 1 enables a one-dimensional search over a common
    factor in ``[1, time_prescale]`` applied to all durations before the
    quasi-Newton run.  Off by default: the search tends to stretch every
    piece to cancel penalties that waypoint moves would fix, and the solver
    then stalls while shortening the durations again.

    ``precondition`` > 0 rescales every variable by ``h**-precondition``,
    where ``h`` is the diagonal curvature of control effort plus time cost
    at the starting point (floored at 1% of its block median).  Waypoints
    next to short pieces are orders of magnitude stiffer than the rest, which
    a plain quasi-Newton start handles poorly.

    ``literal_collision`` switches the corridor penalty argument from
    ``||p - o||^2 - r^2`` to ``||p - o||^2 - r``.  ``past``/``delta`` add an
    optional stop on stalled relative decrease (``past = 0`` disables it).
    """

    rho_time: float = 1.0e6
    rho_vel: float = 1.0e6
    rho_acc: float = 1.0e6
    rho_col: float = 1.0e7
    v_max: float = 10.0
    a_max: float = 15.0
    mu: float = 0.02
    quadrature_samples_per_piece: int = 16
    max_iterations: int = 200
    gradient_tolerance: float = 1e-4
    memory: int = 8
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    order: int = 4
    literal_collision: bool = False
    past: int = 3
    delta: float = 1e-3
    time_prescale: float = 1.0
    precondition: float = 0.25

    def __post_init__(self):
        weights = (self.rho_time, self.rho_vel, self.rho_acc, self.rho_col)
        if min(weights) <= 0 or self.mu <= 0:
            raise ValueError("weights and mu must be positive")
        if self.v_max <= 0 or self.a_max <= 0:
            raise ValueError("v_max and a_max must be positive")
        if self.quadrature_samples_per_piece < 1 or self.order < 2:
            raise ValueError("need >= 1 quadrature node and order >= 2")
        if self.precondition < 0:
            raise ValueError("precondition must be >= 0")
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("Wolfe constants must satisfy 0 < c1 < c2 < 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizerState:
    """Unconstrained variables: log-durations and free waypoints."""

    tau: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        self.q = np.asarray(self.q, dtype=float).reshape(-1, 3)
        if len(self.q) != len(self.tau) - 1:
            raise ValueError(f"{len(self.tau)} durations need {len(self.tau) - 1} waypoints")

    @property
    def durations(self) -> np.ndarray:
        return np.exp(self.tau)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.tau, self.q.ravel()])

    @classmethod
    def unpack(cls, x, m: int) -> "OptimizerState":
        return cls(x[:m].copy(), x[m:].reshape(-1, 3).copy())


@dataclass
class Boundary:
    """Start and goal derivative stacks, each ``(s, 3)``."""

    start: np.ndarray
    goal: np.ndarray

    @classmethod
    def rest(cls, start, goal, s: int = 4) -> "Boundary":
        """Rest-to-rest: positions given, all higher derivatives zero."""
        return cls(_as_state(start, s), _as_state(goal, s))


@dataclass
class OptimizeResult:
    trajectory: Trajectory
    cost: float
    iterations: int
    evaluations: int
    converged: bool
    message: str
    state: OptimizerState
    initial_cost: float
    terms: dict = field(default_factory=dict)

    @property
    def line_search_failed(self) -> bool:
        return self.message == "line search failed"


def lens_center(c0, r0, c1, r1) -> np.ndarray:
    """Midpoint of the part of the center line lying inside both spheres."""
    c0, c1 = np.asarray(c0, dtype=float), np.asarray(c1, dtype=float)
    d = float(np.linalg.norm(c1 - c0))
    if d < 1e-12:
        return c0.copy()
    u = (c1 - c0) / d
    lo = max(-r0, d - r1)
    hi = min(r0, d + r1)
    return c0 + 0.5 * (lo + hi) * u


def profile_times(arclengths, v_max: float, a_max: float, v_start: float = 0.0, v_end: float = 0.0):
    """Times at which a trapezoidal speed profile reaches each arc length.

    The profile accelerates at ``a_max`` from ``v_start`` toward ``v_max``,
    cruises, and brakes at ``a_max`` to ``v_end`` at the last arc length.
    """
    s = np.asarray(arclengths, dtype=float)
    total = float(s[-1])
    v_start = min(v_start, v_max)
    d_acc = max(v_max**2 - v_start**2, 0.0) / (2 * a_max)
    d_dec = max(v_max**2 - v_end**2, 0.0) / (2 * a_max)
    peak = v_max
    if d_acc + d_dec > total:
        # no room to reach v_max: triangular profile
        peak = math.sqrt(max(a_max * total + 0.5 * (v_start**2 + v_end**2), 0.0))
        peak = max(peak, v_start, v_end)
        d_acc = max(peak**2 - v_start**2, 0.0) / (2 * a_max)
        d_dec = max(total - d_acc, 0.0)
    t_acc = (peak - v_start) / a_max
    t_cruise = max(total - d_acc - d_dec, 0.0) / peak if peak > 0 else 0.0
    out = np.empty_like(s)
    for i, x in enumerate(s):
        if x <= d_acc:
            v = math.sqrt(v_start**2 + 2 * a_max * x)
            out[i] = (v - v_start) / a_max
        elif x <= total - d_dec:
            out[i] = t_acc + (x - d_acc) / peak
        else:
            rem = total - x
            v = math.sqrt(max(v_end**2 + 2 * a_max * rem, 0.0))
            t_dec = (peak - v_end) / a_max
            out[i] = t_acc + t_cruise + t_dec - (v - v_end) / a_max
    return out


def default_initialization(corridor: Corridor, v_max: float, start=None, goal=None,
                           a_max: float | None = None, v_start: float = 0.0) -> OptimizerState:
    """Waypoints at sphere-overlap centers, durations from distance over ``v_max``.

    ``start``/``goal`` default to the first and last sphere centers.  Each
    log-duration is floored at ``ln(1e-2)``.

    With ``a_max`` given, durations instead follow a trapezoidal speed
    profile from ``v_start`` up to ``v_max`` and back to rest.  On cruise
    segments this is the same distance over ``v_max``, but it avoids the very
    short first and last pieces that make a rest-to-rest start badly scaled.
    """
    spheres = corridor.spheres
    q = np.array(
        [lens_center(a.center, a.radius, b.center, b.radius) for a, b in zip(spheres[:-1], spheres[1:])]
    ).reshape(-1, 3)
    p0 = spheres[0].center if start is None else np.asarray(start, dtype=float)
    pg = spheres[-1].center if goal is None else np.asarray(goal, dtype=float)
    pts = np.vstack([p0, q, pg])
    lengths = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if a_max is None:
        durations = lengths / v_max
    else:
        arc = np.concatenate([[0.0], np.cumsum(lengths)])
        durations = np.diff(profile_times(arc, v_max, a_max, v_start))
    with np.errstate(divide="ignore"):
        tau = np.maximum(np.log(durations), TAU_FLOOR)
    return OptimizerState(tau, q)


def _spheres(corridor: Corridor):
    return np.ascontiguousarray(corridor.centers), np.ascontiguousarray(corridor.radii)


def _kernel(state: OptimizerState, centers, radii, boundary: Boundary, cfg: OptimizerConfig):
    return cost_kernel(
        state.tau, np.ascontiguousarray(state.q), boundary.start, boundary.goal, centers, radii,
        cfg.order, cfg.quadrature_samples_per_piece, cfg.rho_time, cfg.rho_vel, cfg.rho_acc, cfg.rho_col,
        cfg.v_max, cfg.a_max, cfg.mu, cfg.literal_collision,
    )


def _check(state: OptimizerState, corridor: Corridor, boundary: Boundary, cfg: OptimizerConfig):
    if len(corridor) != len(state.tau):
        raise ValueError(f"corridor has {len(corridor)} spheres but the state has {len(state.tau)} pieces")
    s = cfg.order
    if boundary.start.shape != (s, 3) or boundary.goal.shape != (s, 3):
        raise ValueError(f"boundary states must have shape ({s}, 3)")


def evaluate_cost(state: OptimizerState, corridor: Corridor, boundary: Boundary, cfg: OptimizerConfig):
    """Objective value and its gradient ``(d/dtau, d/dq)``.

    Raises:
        ValueError: corridor length does not match the state dimensions.
    """
    _check(state, corridor, boundary, cfg)
    f, gt, gq, _, _ = _kernel(state, *_spheres(corridor), boundary, cfg)
    return f, (gt, gq)


def cost_terms(state: OptimizerState, corridor: Corridor, boundary: Boundary, cfg: OptimizerConfig) -> dict:
    """Objective split into energy, time, velocity, acceleration and corridor terms."""
    _check(state, corridor, boundary, cfg)
    t = _kernel(state, *_spheres(corridor), boundary, cfg)[3]
    return {
        "energy": t[ENERGY],
        "time": t[TIME],
        "velocity": t[VELOCITY],
        "acceleration": t[ACCELERATION],
        "collision": t[COLLISION],
    }


def build_trajectory(state: OptimizerState, boundary: Boundary, s: int = 4) -> Trajectory:
    from .minco import minco_construct

    return minco_construct(state.q, state.durations, boundary.start, boundary.goal, s)


def _prescale(fun, x0, m, f0, limit):
    def scaled(log_k):
        x = x0.copy()
        x[:m] += log_k
        return fun(x)[0]

    res = minimize_scalar(scaled, bounds=(0.0, math.log(limit)), method="bounded", options={"xatol": 0.05})
    if res.fun < f0:
        x = x0.copy()
        x[:m] += res.x
        return x
    return x0


def preconditioner(x, m: int, d0, dg, cfg: OptimizerConfig) -> np.ndarray:
    """Diagonal variable scaling from the effort-plus-time curvature at ``x``."""
    h = effort_curvature(x[:m], np.ascontiguousarray(x[m:]).reshape(-1, 3), d0, dg, int(cfg.order),
                         float(cfg.rho_time), 1e-3)
    if not np.all(np.isfinite(h)):
        return np.ones(len(x))
    for block in (slice(0, m), slice(m, None)):
        seg = np.abs(h[block])
        if len(seg):
            h[block] = np.maximum(seg, max(1e-2 * float(np.median(seg)), 1e-12))
    return h ** -cfg.precondition


def optimize(init: OptimizerState, corridor: Corridor, boundary: Boundary, cfg: OptimizerConfig) -> OptimizeResult:
    """Minimize the penalized objective from ``init`` with L-BFGS.

    A failed line search is not raised: the result carries the best state
    reached and ``line_search_failed`` is set, so the caller can decide via
    :func:`validate` whether the trajectory is usable.
    """
    _check(init, corridor, boundary, cfg)
    centers, radii = _spheres(corridor)
    m = len(init.tau)
    params = (
        m, np.ascontiguousarray(boundary.start, dtype=float), np.ascontiguousarray(boundary.goal, dtype=float),
        centers, radii, int(cfg.order), int(cfg.quadrature_samples_per_piece), float(cfg.rho_time),
        float(cfg.rho_vel), float(cfg.rho_acc), float(cfg.rho_col), float(cfg.v_max), float(cfg.a_max),
        float(cfg.mu), bool(cfg.literal_collision),
    )

    x0 = init.pack()
    f0 = objective(x0, params)[0]
    if cfg.time_prescale > 1.0:
        x0 = _prescale(lambda x: objective(x, params), x0, m, f0, cfg.time_prescale)
    scale = preconditioner(x0, m, params[1], params[2], cfg) if cfg.precondition > 0 else np.ones(len(x0))
    x, f, _, iterations, evaluations, status = lbfgs_nb(
        params, x0, int(cfg.memory), float(cfg.wolfe_c1), float(cfg.wolfe_c2),
        float(cfg.gradient_tolerance), int(cfg.max_iterations), int(cfg.past), float(cfg.delta), scale,
    )
    state = OptimizerState.unpack(x, m)
    _, _, _, terms, c = cost_kernel(x[:m], np.ascontiguousarray(state.q), *params[1:])
    traj = Trajectory(c, state.durations, state.q.copy(), boundary.start.copy(), boundary.goal.copy())
    names = ("energy", "time", "velocity", "acceleration", "collision")
    return OptimizeResult(
        traj, float(f), int(iterations), int(evaluations), status <= 1, STATUS_MESSAGES[status], state, float(f0),
        dict(zip(names, terms.tolist())),
    )


@dataclass
class ValidationReport:
    max_speed: float
    max_accel: float
    max_corridor_violation: float

    def passes(self, v_max: float, a_max: float, tolerance: float = 0.05, max_violation: float = 0.05) -> bool:
        return (
            self.max_speed <= (1 + tolerance) * v_max
            and self.max_accel <= (1 + tolerance) * a_max
            and self.max_corridor_violation <= max_violation
        )


def validate(traj: Trajectory, corridor: Corridor | None = None, cfg: OptimizerConfig | None = None,
             dt: float = 0.01) -> ValidationReport:
    """Worst speed, acceleration and corridor violation sampled every ``dt``.

    The violation of a sample is its distance outside the nearest-surface
    sphere (negative when inside some sphere); the report keeps the maximum
    over samples.  Without a corridor it is ``-inf``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    _, d = traj.sample(dt, orders=3)
    speed = np.linalg.norm(d[1], axis=1)
    accel = np.linalg.norm(d[2], axis=1)
    violation = -np.inf
    if corridor is not None and len(corridor):
        gap = np.linalg.norm(d[0][:, None, :] - corridor.centers[None], axis=2) - corridor.radii[None]
        violation = float(gap.min(axis=1).max())
    return ValidationReport(float(speed.max()), float(accel.max()), violation)
