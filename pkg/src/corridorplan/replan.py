"""Receding-horizon replanning with corridor reuse and hot initialization.

A :class:`PlanSession` owns the executed plan as a chain of trajectory
segments.  Each replan picks the first waypoint ahead of the vehicle as the
splice state, keeps the old corridor spheres after that waypoint that are
still close to the vehicle, grows fresh spheres toward a local goal one
planning horizon down the guide path, and re-optimizes starting from the
previous optimum where the corridors agree.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .corridor import Corridor, SamplerConfig, Sphere, generate_corridor
from .errors import EmptyWorldError, NoPathError, PlannerError, ReplanError
from .pathsearch import GuidePath, astar
from .trajopt.minco import Trajectory, _as_state, sample_many
from .trajopt.optimizer import (
    Boundary,
    OptimizerConfig,
    OptimizerState,
    default_initialization,
    optimize,
    validate,
)
from .world import WorldModel

NO, DISTANCE, COLLISION = "no", "distance_trigger", "collision_trigger"
# extra triggers: no plan yet, and resuming after an emergency stop
INITIAL, RECOVERY = "initial", "recovery"


@dataclass
class ReplanConfig:
    """Replanning policy.

    Attributes:
        horizon: arc length ``D`` covered by each plan.
        trigger_ratio: replan once the vehicle moved ``trigger_ratio * horizon``
            from the last replan position.
        reuse_distance: old spheres whose centers lie within this distance of
            the vehicle may be reused.
        collision_check_dt: sampling step of the remaining-trajectory check.
        recheck_reused: re-evaluate reused spheres against the updated map.
        receding_horizon: reuse spheres and hot-start; ``False`` gives cold
            replans from a fresh corridor and the default initialization.
        max_attempts: replan attempts per trigger; the last one is cold.
        recovery_samples: candidate centers tried when no sphere fits at the
            replan state.
    """

    horizon: float = 15.0
    trigger_ratio: float = 0.4
    reuse_distance: float = 3.0
    collision_check_dt: float = 0.01
    recheck_reused: bool = True
    receding_horizon: bool = True
    max_attempts: int = 2
    recovery_samples: int = 64

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.trigger_ratio <= 1.0:
            raise ValueError("trigger_ratio must lie in [0, 1]")
        if self.reuse_distance < 0 or not self.collision_check_dt > 0:
            raise ValueError("reuse_distance must be >= 0 and collision_check_dt > 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class Segment:
    """A trajectory executed from global time ``t0`` on.

    ``state`` is the optimizer solution behind ``trajectory`` (absent for
    emergency stops) and seeds hot initialization.
    """

    t0: float
    trajectory: Trajectory
    corridor: Corridor | None = None
    state: OptimizerState | None = None
    kind: str = "plan"

    @property
    def t_end(self) -> float:
        return self.t0 + self.trajectory.total_duration


@dataclass
class ReplanState:
    """Where a new plan takes over from the current one."""

    time: float
    state: np.ndarray
    segment: int
    cut: int


@dataclass
class Splice:
    time: float
    before: np.ndarray
    after: np.ndarray

    @property
    def mismatch(self) -> float:
        return float(np.max(np.abs(self.before - self.after)))


@dataclass
class PlanSession:
    """Replanning state: executed segments, last replan position and goal."""

    goal: np.ndarray
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    config: ReplanConfig = field(default_factory=ReplanConfig)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    time: float = 0.0
    last_plan_position: np.ndarray | None = None
    segments: list = field(default_factory=list)
    splices: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)

    # -- composite trajectory ---------------------------------------------

    @property
    def has_plan(self) -> bool:
        return bool(self.segments)

    @property
    def stopped(self) -> bool:
        """True while the newest segment is an emergency stop."""
        return bool(self.segments) and self.segments[-1].kind == "stop"

    def active_index(self, t: float | None = None) -> int:
        t = self.time if t is None else t
        idx = 0
        for i, seg in enumerate(self.segments):
            if seg.t0 <= t:
                idx = i
        return idx

    @property
    def active(self) -> Segment:
        return self.segments[self.active_index()]

    @property
    def trajectory(self) -> Trajectory:
        return self.active.trajectory

    @property
    def corridor(self) -> Corridor | None:
        return self.active.corridor

    @property
    def cursor(self) -> float:
        """Elapsed time on the active trajectory, clamped to its duration."""
        seg = self.active
        return min(self.time - seg.t0, seg.trajectory.total_duration)

    @property
    def end_time(self) -> float:
        return self.segments[-1].t_end

    def state_at(self, t: float, orders: int | None = None) -> np.ndarray:
        seg = self.segments[self.active_index(t)]
        return seg.trajectory.state(t - seg.t0, orders)

    def sample(self, t0: float, t1: float, dt: float, orders: int = 3):
        """Composite derivatives at ``t0, t0 + dt, ...`` up to and including ``t1``.

        Returns ``(t, derivs)`` with ``derivs`` of shape ``(orders, n, 3)``.
        """
        t = np.arange(t0, t1, dt)
        if len(t) == 0 or t[-1] < t1:
            t = np.append(t, t1)
        out = np.empty((orders, len(t), 3))
        bounds = [seg.t0 for seg in self.segments[1:]] + [np.inf]
        for i, seg in enumerate(self.segments):
            lo = -np.inf if i == 0 else seg.t0
            sel = (t >= lo) & (t < bounds[i])
            if sel.any():
                tr = seg.trajectory
                out[:, sel] = sample_many(tr.coeffs, tr.durations, t[sel] - seg.t0, orders)
        return t, out

    def install(self, seg: Segment):
        """Replace everything from ``seg.t0`` on with ``seg``, logging the splice."""
        if self.segments:
            before = self.state_at(seg.t0, seg.trajectory.order)
            after = seg.trajectory.state(0.0, seg.trajectory.order)
            if seg.kind == "plan":
                self.splices.append(Splice(seg.t0, before, after))
        self.segments = [s for s in self.segments if s.t0 < seg.t0] + [seg]

    def log(self, path):
        """Write the replan events as JSON lines."""
        with open(path, "w") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev) + "\n")


# -- triggers ---------------------------------------------------------------


def remaining_clearance(session: PlanSession, known_world: WorldModel, dt: float, bound: float) -> float:
    """Smallest known-world clearance along the rest of the composite trajectory.

    Values above ``bound`` are not exact.
    """
    if session.time >= session.end_time:
        pts = session.state_at(session.time, 1)
    else:
        _, d = session.sample(session.time, session.end_time, dt, orders=1)
        pts = d[0]
    try:
        _, dist = known_world.clearance_many(pts, bound)
    except EmptyWorldError:
        return np.inf
    return float(dist.min()) if len(dist) else np.inf


def should_replan(session: PlanSession, p_curr, known_world: WorldModel, cfg: ReplanConfig,
                  drone_radius: float = 0.3) -> str:
    """``collision_trigger``, ``distance_trigger`` or ``no`` (collision wins).

    Sessions without a plan report ``initial``; after an emergency stop every
    call reports ``recovery`` until a replan succeeds.
    """
    if not session.has_plan or session.last_plan_position is None:
        return INITIAL
    if session.stopped:
        return RECOVERY
    if remaining_clearance(session, known_world, cfg.collision_check_dt, drone_radius) < drone_radius:
        return COLLISION
    moved = float(np.linalg.norm(np.asarray(p_curr, dtype=float) - session.last_plan_position))
    if moved > cfg.trigger_ratio * cfg.horizon:
        return DISTANCE
    return NO


def select_replan_state(session: PlanSession, p_curr=None) -> ReplanState:
    """Derivative stack at the first waypoint strictly ahead of the cursor.

    The composite's waypoints are the junctions of every segment plus the
    segment starts.  Past the last one the terminal state is used, spliced
    at the end of the plan, or now if the vehicle already stopped there.
    """
    now = session.time
    s = session.optimizer.order
    if not session.has_plan:
        p = session.last_plan_position if p_curr is None else p_curr
        return ReplanState(now, _as_state(np.asarray(p, dtype=float), s), -1, -1)
    starts = [seg.t0 for seg in session.segments[1:]] + [np.inf]
    for i, seg in enumerate(session.segments):
        if seg.t0 > now:
            return ReplanState(seg.t0, seg.trajectory.state(0.0, s), i, -1)
        for j, tj in enumerate(seg.trajectory.junction_times):
            tg = seg.t0 + tj
            if tg >= starts[i]:
                break
            if tg > now:
                return ReplanState(tg, seg.trajectory.state(tj, s), i, j)
    last = len(session.segments) - 1
    seg = session.segments[last]
    t_end = max(seg.t_end, now)
    return ReplanState(t_end, seg.trajectory.state(seg.trajectory.total_duration, s), last,
                       seg.trajectory.num_pieces - 1)


# -- corridor reuse ---------------------------------------------------------


def recheck_sphere(world: WorldModel, sphere: Sphere, cfg: SamplerConfig) -> Sphere | None:
    """Sphere re-sized against ``world``: unchanged if still clear, shrunk, or ``None``."""
    bound = sphere.radius + cfg.drone_radius
    try:
        nearest, dist = world.clearance_many(sphere.center, bound)
    except EmptyWorldError:
        return sphere
    if dist[0] >= bound:
        return sphere
    r = float(dist[0]) - cfg.drone_radius
    if r < cfg.min_radius:
        return None
    return Sphere(sphere.center, nearest[0], r)


def reusable_prefix(session: PlanSession, rp: ReplanState, p_curr, world: WorldModel) -> list:
    """Old spheres after the cut near ``p_curr``, re-checked, as a contiguous chain."""
    cfg = session.config
    seg = session.segments[rp.segment]
    if seg.corridor is None:
        return []
    out = []
    for sp in seg.corridor.spheres[rp.cut + 1:]:
        if np.linalg.norm(sp.center - np.asarray(p_curr)) > cfg.reuse_distance:
            break
        if cfg.recheck_reused:
            sp = recheck_sphere(world, sp, session.sampler)
            if sp is None:
                break
        if out and np.linalg.norm(sp.center - out[-1].center) >= sp.radius + out[-1].radius:
            break
        out.append(sp)
    return out


def start_sphere(world: WorldModel, p, cfg: SamplerConfig, rng, samples: int = 64) -> Sphere:
    """Sphere for a corridor starting at ``p``.

    Centered at ``p`` when it fits; otherwise the sampled nearby sphere that
    leaves ``p`` deepest inside (or least outside), which still lets the
    optimizer start from a state hugging an obstacle.

    Raises:
        ReplanError: no candidate reaches ``cfg.min_radius``.
    """
    p = np.asarray(p, dtype=float)
    bound = cfg.max_radius_cap + cfg.drone_radius
    centers = np.vstack([p, p + 0.5 * rng.standard_normal((samples, 3))])
    try:
        nearest, dist = world.clearance_many(centers, bound)
    except EmptyWorldError:
        return Sphere(p, p + np.array([bound, 0.0, 0.0]), cfg.max_radius_cap)
    far = dist > bound
    nearest[far] = centers[far] + np.array([bound, 0.0, 0.0])
    r = np.minimum(dist - cfg.drone_radius, cfg.max_radius_cap)
    if r[0] >= cfg.min_radius:
        return Sphere(p, nearest[0], r[0])
    depth = np.where(r >= cfg.min_radius, r - np.linalg.norm(centers - p, axis=1), -np.inf)
    k = int(np.argmax(depth))
    if not np.isfinite(depth[k]):
        raise ReplanError(f"no sphere of radius >= {cfg.min_radius} near {p.tolist()}")
    return Sphere(centers[k], nearest[k], r[k])


def local_goal(path: GuidePath, goal, horizon: float) -> np.ndarray:
    """Guide-path point one horizon ahead, or the exact goal when closer."""
    if path.length <= horizon:
        return np.asarray(goal, dtype=float).copy()
    return path.point_at(horizon)


def hot_initialization(init: OptimizerState, old: OptimizerState | None, cut: int, reused: int) -> OptimizerState:
    """Copy durations and inner waypoints of the reused pieces from ``old``.

    New piece ``i < reused`` is old piece ``cut + 1 + i``; the waypoint
    joining the last reused piece to fresh spheres keeps its default.
    """
    if old is None or reused == 0:
        return init
    tau, q = init.tau.copy(), init.q.copy()
    for i in range(reused):
        k = cut + 1 + i
        if k >= len(old.tau):
            break
        tau[i] = old.tau[k]
        if i < reused - 1 and i < len(q) and k < len(old.q):
            q[i] = old.q[k]
    return OptimizerState(tau, q)


def plan_clearance(traj: Trajectory, world: WorldModel, dt: float, bound: float) -> float:
    _, d = traj.sample(dt, orders=1)
    try:
        return float(world.clearance_many(d[0], bound)[1].min())
    except EmptyWorldError:
        return np.inf


def receding_replan(session: PlanSession, p_curr, known_world: WorldModel, path: GuidePath,
                    rp: ReplanState | None = None, hot: bool | None = None) -> tuple:
    """One replan: reuse, extend, initialize, optimize, check.

    Returns ``(segment, info)``; ``segment`` is ready for :meth:`PlanSession.install`.

    Raises:
        ReplanError: corridor generation failed or the optimized trajectory
            breaks the limits, leaves its corridor, or comes within the
            drone radius of a known obstacle.
    """
    cfg, scfg, ocfg = session.config, session.sampler, session.optimizer
    rp = select_replan_state(session, p_curr) if rp is None else rp
    hot = cfg.receding_horizon if hot is None else hot
    p0 = rp.state[0]
    goal = local_goal(path, session.goal, cfg.horizon)
    t0 = time.perf_counter()
    prefix = reusable_prefix(session, rp, p_curr, known_world) if hot and rp.segment >= 0 else []
    if prefix and not prefix[0].contains(p0, tol=0.05):
        prefix = []
    reused = len(prefix)
    seeds = prefix or [start_sphere(known_world, p0, scfg, session.rng, cfg.recovery_samples)]
    try:
        corridor = generate_corridor(known_world, path.truncated(cfg.horizon), p0, goal, scfg, session.rng,
                                     prefix=seeds)
    except PlannerError as exc:
        raise ReplanError(f"corridor: {exc}") from exc
    corridor.reused_prefix_len = reused
    t1 = time.perf_counter()
    init = default_initialization(corridor, ocfg.v_max, start=p0, goal=goal, a_max=ocfg.a_max,
                                  v_start=float(np.linalg.norm(rp.state[1])))
    old = session.segments[rp.segment].state if reused else None
    init = hot_initialization(init, old, rp.cut, reused)
    res = optimize(init, corridor, Boundary(rp.state, _as_state(goal, ocfg.order)), ocfg)
    t2 = time.perf_counter()
    info = {
        "reused_spheres": reused,
        "new_spheres": len(corridor) - reused,
        "opt_iterations": res.iterations,
        "opt_evaluations": res.evaluations,
        "opt_message": res.message,
        "opt_wall_ms": 1e3 * (t2 - t1),
        "corridor_wall_ms": 1e3 * (t1 - t0),
        "hot": bool(reused),
        "local_goal": goal.tolist(),
        "duration": res.trajectory.total_duration,
    }
    report = validate(res.trajectory, corridor, dt=cfg.collision_check_dt)
    if not np.all(np.isfinite(res.trajectory.coeffs)) or not report.passes(ocfg.v_max, ocfg.a_max):
        raise ReplanError(f"trajectory rejected: {report}")
    clear = plan_clearance(res.trajectory, known_world, cfg.collision_check_dt, scfg.drone_radius)
    if clear < scfg.drone_radius:
        raise ReplanError(f"trajectory clearance {clear:.3f} below the drone radius")
    return Segment(rp.time, res.trajectory, corridor, res.state), info


def emergency_stop(state: np.ndarray, a_max: float, s: int) -> Trajectory:
    """Straight-line stop at constant deceleration ``a_max`` from ``state``."""
    p, v = state[0], state[1]
    speed = float(np.linalg.norm(v))
    c = np.zeros((1, 2 * s, 3))
    c[0, 0] = p
    if speed < 1e-9:
        T = 1e-3
        stop = p.copy()
    else:
        T = speed / a_max
        c[0, 1] = v
        c[0, 2] = -0.5 * a_max * v / speed
        stop = p + 0.5 * speed * T * v / speed
    start = np.zeros((s, 3))
    start[0], start[1] = c[0, 0], c[0, 1]
    if s > 2:
        start[2] = 2.0 * c[0, 2]
    return Trajectory(c, np.array([T]), np.empty((0, 3)), start, _as_state(stop, s))


def plan_cycle(session: PlanSession, known_world: WorldModel) -> dict | None:
    """Trigger check plus, if needed, a replan installed into ``session``.

    Failed replans keep the current plan unless it is in collision, in which
    case an emergency stop is installed from the current state.  Returns the
    event record, or ``None`` when no replan was needed.
    """
    cfg = session.config
    now = session.time
    p_curr = session.state_at(now, 1)[0] if session.has_plan else session.last_plan_position
    trigger = should_replan(session, p_curr, known_world, cfg, session.sampler.drone_radius)
    if trigger == NO:
        return None
    t_start = time.perf_counter()
    rp = select_replan_state(session, p_curr)
    event = {"t": now, "trigger": trigger, "splice_t": rp.time}
    error = None
    t_a = time.perf_counter()
    try:
        path = astar(known_world, rp.state[0], session.goal, allow_occupied_start=True)
    except NoPathError as exc:
        path, error = None, f"guide path: {exc}"
    event["astar_wall_ms"] = 1e3 * (time.perf_counter() - t_a)
    for attempt in range(cfg.max_attempts if path is not None else 0):
        # the last of several attempts starts cold from a fresh corridor
        hot = cfg.receding_horizon and (attempt < cfg.max_attempts - 1 or cfg.max_attempts == 1)
        try:
            seg, info = receding_replan(session, p_curr, known_world, path, rp, hot=hot)
        except ReplanError as exc:
            error = str(exc)
            continue
        event.update(info)
        event["attempts"] = attempt + 1
        session.install(seg)
        session.last_plan_position = np.asarray(p_curr, dtype=float).copy()
        error = None
        break
    if error is not None:
        event["error"] = error
        event["attempts"] = cfg.max_attempts
        if not session.has_plan or trigger == COLLISION and not session.stopped:
            state = session.state_at(now) if session.has_plan else _as_state(p_curr, session.optimizer.order)
            stop = emergency_stop(state, session.optimizer.a_max, session.optimizer.order)
            session.install(Segment(now, stop, kind="stop"))
            event["emergency_stop"] = True
    event["success"] = error is None
    event["planning_wall_ms"] = 1e3 * (time.perf_counter() - t_start)
    session.events.append(event)
    return event


def config_dict(cfg) -> dict:
    return asdict(cfg)
