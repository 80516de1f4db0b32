"""Closed-loop forest flights, benchmark sweeps and plot-data export.

A trial flies from one end of a Poisson forest to the other.  Each sensor
period the vehicle senses the ground truth within range, merges it into its
known map, possibly replans, and then follows the plan exactly for one
period.  Flight constraints are checked against the ground truth on a fine
time grid while flying.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corridor import Corridor, SamplerConfig, generate_corridor, lens_volumes, sphere_volume
from .pathsearch import GuidePath, astar
from .replan import PlanSession, ReplanConfig, plan_cycle
from .trajopt.optimizer import (
    Boundary,
    OptimizeResult,
    OptimizerConfig,
    ValidationReport,
    default_initialization,
    optimize,
    validate,
)
from .world import ForestSpec, SensorSpec, WorldModel, forest_bounds, generate_forest, sense

FAILURES = ("collision", "speed_violation", "accel_violation", "plan_failure", "timeout")


@dataclass
class TrialSpec:
    """Everything that defines one closed-loop flight.

    ``seed`` seeds both the forest and the planner's sampler; the forest's
    own seed field is overridden.  Start and goal default to the two ends of
    the forest at ``altitude``.  ``guide_inflation`` is the obstacle
    inflation of the known map's occupancy grid; by default drone radius
    plus minimum sphere radius, so every free guide cell admits a sphere.
    """

    forest: ForestSpec = field(default_factory=ForestSpec)
    sensor: SensorSpec = field(default_factory=SensorSpec)
    v_max: float = 10.0
    a_max: float = 15.0
    start: np.ndarray | None = None
    goal: np.ndarray | None = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    replan: ReplanConfig = field(default_factory=ReplanConfig)
    seed: int = 0
    altitude: float = 2.5
    body_radius: float = 0.2
    goal_tolerance: float = 0.5
    limit_tolerance: float = 0.05
    timeout_factor: float = 3.0
    check_dt: float = 0.005
    voxel_resolution: float = 0.2
    guide_inflation: float | None = None
    tracking_noise: float = 0.0

    def __post_init__(self):
        if not (self.v_max > 0 and self.a_max > 0):
            raise ValueError("v_max and a_max must be positive")
        half_l, half_w = self.forest.length / 2, self.forest.width / 2
        for name in ("start", "goal"):
            p = getattr(self, name)
            if p is None:
                x = -half_l if name == "start" else half_l
                p = np.array([x, 0.0, self.altitude])
            p = np.asarray(p, dtype=float)
            if abs(p[0]) > half_l + 1.0 or abs(p[1]) > half_w or not 0.0 < p[2] < self.forest.tree_height:
                raise ValueError(f"{name} {p.tolist()} lies outside the forest margins")
            setattr(self, name, p)

    def resolved(self):
        """Module configs with the trial's limits and seed applied."""
        forest = replace(self.forest, seed=self.seed)
        opt = replace(self.optimizer, v_max=self.v_max, a_max=self.a_max)
        return forest, opt

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.tolist()
        d["goal"] = self.goal.tolist()
        return d


@dataclass
class TrialResult:
    seed: int
    density: float
    v_max: float
    success: bool
    failure_reason: str | None
    flight_time: float
    path_length: float
    avg_speed: float
    max_speed: float
    max_accel: float
    min_clearance: float
    mapping_mean: float
    mapping_std: float
    planning_mean: float
    planning_std: float
    replans: int
    failed_replans: int
    hot_iterations: float
    cold_iterations: float
    max_splice_mismatch: float
    wall_time: float
    offline_pass: bool | None = None
    artifacts: dict = field(default_factory=dict, repr=False)

    CSV_FIELDS = (
        "seed", "density", "v_max", "success", "failure_reason", "flight_time", "path_length", "max_speed",
        "mapping_mean", "mapping_std", "planning_mean", "planning_std",
        "avg_speed", "max_accel", "min_clearance", "replans", "failed_replans", "hot_iterations",
        "cold_iterations", "max_splice_mismatch", "offline_pass",
    )

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def _stats(xs):
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        return float("nan"), float("nan")
    return float(xs.mean()), float(xs.std())


def ground_truth_clearance(truth: WorldModel, pts: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest tree point or the ground."""
    ground = pts[:, 2]
    if len(truth) == 0:
        return ground
    _, dist = truth.nearest_many(pts)
    return np.minimum(dist, ground)


def run_trial(spec: TrialSpec, keep_artifacts: bool = True) -> TrialResult:
    """Fly one closed-loop trial; every flight failure ends up in the result."""
    wall0 = time.perf_counter()
    forest, ocfg = spec.resolved()
    rdrone = spec.sampler.drone_radius
    truth, _ = generate_forest(forest, spec.voxel_resolution, rdrone, solid_bounds=True)
    inflation = spec.guide_inflation
    if inflation is None:
        inflation = rdrone + spec.sampler.min_radius
    known = WorldModel(forest_bounds(forest), spec.voxel_resolution, inflation, solid_bounds=True)
    session = PlanSession(spec.goal, spec.sampler, ocfg, spec.replan, np.random.default_rng(spec.seed),
                          last_plan_position=spec.start.copy())
    noise = np.random.default_rng(spec.seed + 1_000_003)
    period = spec.sensor.period
    timeout = spec.timeout_factor * float(np.linalg.norm(spec.goal - spec.start)) / spec.v_max
    mapping, planning = [], []
    p = spec.start.copy()
    samples = [np.concatenate([[0.0], p, np.zeros(6)])]
    corridors = []
    reason, success, now = None, False, 0.0
    min_clear, vmax_seen, amax_seen = np.inf, 0.0, 0.0
    tick = 0
    while True:
        now = tick * period
        session.time = now
        t0 = time.perf_counter()
        known.merge(sense(truth, p, spec.sensor))
        t1 = time.perf_counter()
        mapping.append(1e3 * (t1 - t0))
        event = plan_cycle(session, known)
        if event is not None:
            planning.append(event["planning_wall_ms"])
            if event["success"]:
                corridors.append((now, session.segments[-1].corridor))
        t_next = (tick + 1) * period
        ts, d = session.sample(now, t_next, spec.check_dt, orders=3)
        pos = d[0]
        if spec.tracking_noise > 0:
            pos = pos + spec.tracking_noise * noise.standard_normal(pos.shape)
        speed = np.linalg.norm(d[1], axis=1)
        accel = np.linalg.norm(d[2], axis=1)
        clear = ground_truth_clearance(truth, pos) - spec.body_radius
        min_clear = min(min_clear, float(clear.min()))
        vmax_seen = max(vmax_seen, float(speed.max()))
        amax_seen = max(amax_seen, float(accel.max()))
        samples.extend(np.column_stack([ts[1:], pos[1:], d[1][1:], d[2][1:]]))
        p = pos[-1]
        tick += 1
        if clear.min() < 0 or pos[:, 2].min() < 0:
            reason = "collision"
        elif speed.max() > (1 + spec.limit_tolerance) * spec.v_max:
            reason = "speed_violation"
        elif accel.max() > (1 + spec.limit_tolerance) * spec.a_max:
            reason = "accel_violation"
        elif np.linalg.norm(p - spec.goal) < spec.goal_tolerance:
            success = True
        elif t_next > timeout:
            reason = "plan_failure" if session.stopped or not session.events[-1:] or not any(
                e["success"] for e in session.events) else "timeout"
        if success or reason:
            now = t_next
            break
    trace = np.array(samples)
    hot = [e["opt_iterations"] for e in session.events if e.get("success") and e.get("hot")]
    cold = [e["opt_iterations"] for e in session.events if e.get("success") and not e.get("hot")]
    mm, ms = _stats(mapping)
    pm, ps = _stats(planning)
    length = float(np.linalg.norm(np.diff(trace[:, 1:4], axis=0), axis=1).sum())
    result = TrialResult(
        seed=spec.seed, density=forest.density, v_max=spec.v_max, success=success, failure_reason=reason,
        flight_time=now, path_length=length, avg_speed=length / now if now > 0 else 0.0,
        max_speed=vmax_seen, max_accel=amax_seen, min_clearance=min_clear,
        mapping_mean=mm, mapping_std=ms, planning_mean=pm, planning_std=ps,
        replans=sum(1 for e in session.events if e["success"]),
        failed_replans=sum(1 for e in session.events if not e["success"]),
        hot_iterations=float(np.mean(hot)) if hot else float("nan"),
        cold_iterations=float(np.mean(cold)) if cold else float("nan"),
        max_splice_mismatch=max((s.mismatch for s in session.splices), default=0.0),
        wall_time=time.perf_counter() - wall0,
    )
    if keep_artifacts:
        result.artifacts = {
            "trace": trace,
            "session": session,
            "events": session.events,
            "corridors": corridors,
            "truth": truth,
            "known": known,
            "mapping_ms": mapping,
            "planning_ms": planning,
        }
    return result


def offline_check(result: TrialResult, spec: TrialSpec, dt: float = 0.005) -> dict:
    """Independent re-check of an executed flight from its recorded segments.

    Re-samples the composite trajectory at ``dt`` against a freshly generated
    ground truth.  Returns worst speed, acceleration, clearance (minus the body
    radius) and the largest derivative mismatch at splice points.
    """
    session = result.artifacts["session"]
    forest, _ = spec.resolved()
    truth, _ = generate_forest(forest, spec.voxel_resolution, spec.sampler.drone_radius)
    _, d = session.sample(0.0, result.flight_time, dt, orders=3)
    clear = ground_truth_clearance(truth, d[0]) - spec.body_radius
    mismatch = 0.0
    for sp in session.splices:
        mismatch = max(mismatch, sp.mismatch)
    return {
        "max_speed": float(np.linalg.norm(d[1], axis=1).max()),
        "max_accel": float(np.linalg.norm(d[2], axis=1).max()),
        "min_clearance": float(clear.min()),
        "splice_mismatch": mismatch,
        "splices": len(session.splices),
    }


def offline_passes(check: dict, spec: TrialSpec) -> bool:
    tol = 1 + spec.limit_tolerance
    return (
        check["max_speed"] <= tol * spec.v_max
        and check["max_accel"] <= tol * spec.a_max
        and check["min_clearance"] >= 0.0
        and check["splice_mismatch"] <= 1e-6
    )


# -- sweeps -----------------------------------------------------------------


@dataclass
class SweepResult:
    densities: list
    speeds: list
    trials: list

    def success_matrix(self) -> np.ndarray:
        """Success rate per (density, speed)."""
        out = np.zeros((len(self.densities), len(self.speeds)))
        for i, dens in enumerate(self.densities):
            for j, v in enumerate(self.speeds):
                cell = [t.success for t in self.trials if t.density == dens and t.v_max == v]
                out[i, j] = np.mean(cell) if cell else np.nan
        return out

    def runtime_table(self) -> dict:
        """Pooled per-cycle mapping and planning times in milliseconds."""
        mapping = np.concatenate([t.artifacts.get("mapping_ms", []) for t in self.trials] or [[]])
        planning = np.concatenate([t.artifacts.get("planning_ms", []) for t in self.trials] or [[]])
        mm, ms = _stats(mapping)
        pm, ps = _stats(planning)
        return {"mapping_mean": mm, "mapping_std": ms, "planning_mean": pm, "planning_std": ps}


def _run_one(spec):
    res = run_trial(spec)
    check = offline_check(res, spec)
    res.offline_pass = offline_passes(check, spec)
    # keep only small picklable artifacts so results can cross process boundaries
    res.artifacts = {k: res.artifacts[k] for k in ("mapping_ms", "planning_ms", "events")}
    res.artifacts["offline_check"] = check
    return res


def run_sweep(densities, speeds, trials_per_cell: int, base: TrialSpec, out_dir=None, workers: int = 1,
              progress=None) -> SweepResult:
    """Run ``trials_per_cell`` trials for every density and speed.

    Trial ``k`` of each cell uses seed ``base.seed + k``.  Every trial is
    re-checked offline (:func:`offline_check`); the outcome is stored in
    ``offline_pass`` and the numbers in ``artifacts["offline_check"]``.  With ``out_dir``
    the manifest, ``results.csv``, the success matrix and per-trial event logs
    are written there.
    """
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be >= 1")
    specs = []
    for dens in densities:
        for v in speeds:
            for k in range(trials_per_cell):
                forest = replace(base.forest, density=float(dens))
                specs.append(replace(base, forest=forest, v_max=float(v), seed=base.seed + k))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            trials = list(pool.map(_run_one, specs))
    else:
        trials = []
        for spec in specs:
            trials.append(_run_one(spec))
            if progress:
                progress(trials[-1])
    sweep = SweepResult([float(d) for d in densities], [float(v) for v in speeds], trials)
    if out_dir is not None:
        write_sweep(sweep, base, out_dir, trials_per_cell)
    return sweep


def write_results_csv(path, trials):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TrialResult.CSV_FIELDS)
        w.writeheader()
        for t in trials:
            w.writerow(t.row())


def write_manifest(out_dir, config: dict, seeds, extra: dict | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"config": config, "seeds": list(seeds), "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    doc.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_events(path, events):
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev, default=_json_default) + "\n")


def write_sweep(sweep: SweepResult, base: TrialSpec, out_dir, trials_per_cell: int):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, base.to_dict(), [base.seed + k for k in range(trials_per_cell)], {
        "densities": sweep.densities, "speeds": sweep.speeds, "trials_per_cell": trials_per_cell,
        "runtime": sweep.runtime_table(),
    })
    write_results_csv(out / "results.csv", sweep.trials)
    write_success_matrix(out / "success_matrix.csv", sweep)
    events = out / "events"
    events.mkdir(exist_ok=True)
    for t in sweep.trials:
        write_events(events / f"trial_d{t.density:.4f}_v{t.v_max:g}_s{t.seed}.jsonl", t.artifacts.get("events", []))


def write_success_matrix(path, sweep: SweepResult):
    mat = sweep.success_matrix()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["density"] + [f"v{v:g}" for v in sweep.speeds])
        for dens, row in zip(sweep.densities, mat):
            w.writerow([dens] + row.tolist())


# -- plot data --------------------------------------------------------------


def corridor_geometry(corridor: Corridor) -> np.ndarray:
    """Rows ``(index, cx, cy, cz, radius, volume, overlap_with_next)``."""
    c, r = corridor.centers, corridor.radii
    overlap = np.zeros(len(r))
    if len(r) > 1:
        overlap[:-1] = lens_volumes(r[:-1], r[1:], np.linalg.norm(np.diff(c, axis=0), axis=1))
    return np.column_stack([np.arange(len(r)), c, r, sphere_volume(r), overlap])


def export_plots(result: TrialResult, out_dir, sweep: SweepResult | None = None) -> list:
    """Write plot-ready CSV series for one trial (and optionally a sweep).

    Files: ``profile.csv`` (time, speed and acceleration norms),
    ``path.csv`` (executed positions with speed), ``corridors.csv`` (sphere
    volumes and overlaps per plan) and ``success_matrix.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = result.artifacts["trace"]
    speed = np.linalg.norm(trace[:, 4:7], axis=1)
    accel = np.linalg.norm(trace[:, 7:10], axis=1)
    written = []
    path = out / "profile.csv"
    _write_csv(path, ["t", "speed", "accel"], np.column_stack([trace[:, 0], speed, accel]))
    written.append(path)
    path = out / "path.csv"
    _write_csv(path, ["t", "x", "y", "z", "speed"], np.column_stack([trace[:, :4], speed]))
    written.append(path)
    rows = []
    for k, (t, corridor) in enumerate(result.artifacts.get("corridors", [])):
        geo = corridor_geometry(corridor)
        rows.append(np.column_stack([np.full(len(geo), k), np.full(len(geo), t), geo]))
    path = out / "corridors.csv"
    _write_csv(path, ["plan", "t", "sphere", "cx", "cy", "cz", "radius", "volume", "overlap_next"],
               np.vstack(rows) if rows else np.empty((0, 9)))
    written.append(path)
    if sweep is not None:
        path = out / "success_matrix.csv"
        write_success_matrix(path, sweep)
        written.append(path)
    return written


def _write_csv(path, header, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(np.asarray(data).tolist())


def straight_line_time(spec: TrialSpec) -> float:
    return float(np.linalg.norm(spec.goal - spec.start)) / spec.v_max


def summarize(results) -> str:
    lines = []
    for r in results:
        status = "ok " if r.success else f"{r.failure_reason}"
        lines.append(
            f"seed {r.seed:3d} dens {r.density:.4f} v {r.v_max:4.1f}: {status:16s} t {r.flight_time:6.2f}s "
            f"len {r.path_length:6.2f} vmax {r.max_speed:5.2f} plan {r.planning_mean:6.2f}ms "
            f"map {r.mapping_mean:5.2f}ms replans {r.replans}/{r.failed_replans}"
        )
    return "\n".join(lines)


@dataclass
class OfflinePlan:
    """A single global plan on a fully known world."""

    path: GuidePath
    corridor: Corridor
    result: OptimizeResult
    report: ValidationReport
    clearance: float
    timings_ms: dict


def plan_offline(world: WorldModel, start, goal, sampler: SamplerConfig, optimizer: OptimizerConfig,
                 rng=None, check_dt: float = 0.01) -> OfflinePlan:
    """Guide path, corridor and optimized rest-to-rest trajectory from ``start`` to ``goal``.

    ``clearance`` is the smallest distance from the sampled trajectory to an
    obstacle point or a solid face of the world.

    Raises:
        NoPathError, CorridorError, SphereRejectedError: no plan could be built.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    start, goal = np.asarray(start, dtype=float), np.asarray(goal, dtype=float)
    t0 = time.perf_counter()
    path = astar(world, start, goal)
    t1 = time.perf_counter()
    corridor = generate_corridor(world, path, start, goal, sampler, rng)
    t2 = time.perf_counter()
    init = default_initialization(corridor, optimizer.v_max, start=start, goal=goal, a_max=optimizer.a_max)
    res = optimize(init, corridor, Boundary.rest(start, goal, optimizer.order), optimizer)
    t3 = time.perf_counter()
    report = validate(res.trajectory, corridor, dt=check_dt)
    _, d = res.trajectory.sample(check_dt, orders=1)
    clear = float(world.clearance_many(d[0])[1].min())
    timings = {"astar": 1e3 * (t1 - t0), "corridor": 1e3 * (t2 - t1), "optimize": 1e3 * (t3 - t2)}
    return OfflinePlan(path, corridor, res, report, clear, timings)


__all__ = [
    "OfflinePlan", "plan_offline",
    "FAILURES", "TrialSpec", "TrialResult", "run_trial", "offline_check", "offline_passes", "SweepResult",
    "run_sweep", "export_plots", "corridor_geometry", "summarize", "straight_line_time",
]
