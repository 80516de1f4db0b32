import csv
import json
import math

import numpy as np
import pytest

from corridorplan.bench import (
    SweepResult,
    TrialResult,
    TrialSpec,
    corridor_geometry,
    export_plots,
    offline_check,
    offline_passes,
    plan_offline,
    run_sweep,
    run_trial,
    straight_line_time,
    summarize,
    write_results_csv,
)
from corridorplan.corridor import Corridor, SamplerConfig, Sphere
from corridorplan.trajopt.optimizer import OptimizerConfig
from corridorplan.world import ForestSpec, generate_forest


def short_spec(density=1 / 36, seed=0, **kw):
    return TrialSpec(forest=ForestSpec(length=24.0, width=16.0, density=density), seed=seed, **kw)


@pytest.fixture(scope="module")
def short_trial():
    spec = short_spec(seed=3, v_max=5.0)
    return spec, run_trial(spec)


def test_empty_forest_flies_straight():
    spec = TrialSpec(forest=ForestSpec(density=1e-9), v_max=5.0)
    res = run_trial(spec)
    assert res.success and res.failure_reason is None
    straight = float(np.linalg.norm(spec.goal - spec.start))
    assert straight <= res.path_length <= 1.05 * straight
    assert res.flight_time >= straight_line_time(spec)
    assert res.max_speed <= 1.05 * spec.v_max and res.max_accel <= 1.05 * spec.a_max


def test_short_trial_succeeds_and_passes_offline_check(short_trial):
    spec, res = short_trial
    assert res.success, summarize([res])
    assert res.replans >= 1 and res.min_clearance >= 0.0
    check = offline_check(res, spec)
    assert offline_passes(check, spec), check
    assert check["splices"] == len(res.artifacts["session"].splices)
    assert not offline_passes({**check, "splice_mismatch": 1e-3}, spec)
    assert not offline_passes({**check, "min_clearance": -0.01}, spec)


def test_trial_is_deterministic(short_trial):
    spec, res = short_trial
    again = run_trial(spec)
    assert again.success == res.success
    assert np.array_equal(again.artifacts["trace"], res.artifacts["trace"])


def test_goal_inside_tree_is_not_a_success():
    forest = ForestSpec(length=24.0, width=16.0, density=1 / 25, seed=5)
    _, centers = generate_forest(forest)
    inner = centers[(np.abs(centers[:, 0]) < 8) & (np.abs(centers[:, 1]) < 6)]
    tree = inner[0]
    spec = TrialSpec(forest=forest, seed=5, v_max=5.0, goal=np.array([tree[0], tree[1], 2.5]))
    res = run_trial(spec)
    assert not res.success
    assert res.failure_reason in ("plan_failure", "timeout", "collision")


def test_plan_offline_in_forest(dense_forest):
    world, _ = dense_forest
    plan = plan_offline(world, (-30, 0, 2.5), (30, 0, 2.5), SamplerConfig(), OptimizerConfig(v_max=5.0))
    assert plan.report.passes(5.0, 15.0)
    assert plan.clearance > 0.0
    assert set(plan.timings_ms) == {"astar", "corridor", "optimize"}


def test_sweep_matrix_and_files(tmp_path):
    base = short_spec()
    sweep = run_sweep([1e-9, 1 / 49], [5.0], 1, base, out_dir=tmp_path)
    mat = sweep.success_matrix()
    assert mat.shape == (2, 1) and np.all((mat >= 0) & (mat <= 1))
    assert mat[0, 0] == 1.0
    assert all(t.offline_pass is not None for t in sweep.trials)
    assert all(t.offline_pass for t in sweep.trials if t.success)
    for name in ("manifest.json", "results.csv", "success_matrix.csv"):
        assert (tmp_path / name).exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seeds"] == [0] and manifest["speeds"] == [5.0]
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and set(TrialResult.CSV_FIELDS) <= set(rows[0])
    assert len(list((tmp_path / "events").glob("*.jsonl"))) == 2
    rt = sweep.runtime_table()
    assert rt["planning_mean"] > 0 and rt["mapping_mean"] > 0
    with pytest.raises(ValueError):
        run_sweep([0.01], [5.0], 0, base)


def test_corridor_geometry_overlap():
    c = Corridor([Sphere(np.zeros(3), np.array([1.0, 0, 0]), 1.0), Sphere(np.array([1.0, 0, 0]), np.zeros(3), 1.0)])
    geo = corridor_geometry(c)
    assert geo.shape == (2, 7)
    assert geo[0, 6] == pytest.approx(5 * math.pi / 12)
    assert geo[1, 6] == 0.0
    assert np.allclose(geo[:, 5], 4 / 3 * math.pi)


def _constant_speed_result():
    t = np.linspace(0, 2, 21)
    trace = np.column_stack([t, 4 * t, 0 * t, 0 * t + 2.5, np.full_like(t, 4.0), 0 * t, 0 * t, 0 * t, 0 * t, 0 * t])
    res = TrialResult(0, 0.01, 5.0, True, None, 2.0, 8.0, 4.0, 4.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1, 0,
                      float("nan"), 5.0, 0.0, 0.1)
    res.artifacts = {"trace": trace, "corridors": []}
    return res


def test_export_constant_speed_series(tmp_path):
    sweep = SweepResult([0.01], [5.0], [_constant_speed_result()])
    files = export_plots(_constant_speed_result(), tmp_path, sweep)
    assert sorted(f.name for f in files) == ["corridors.csv", "path.csv", "profile.csv", "success_matrix.csv"]
    prof = np.loadtxt(tmp_path / "profile.csv", delimiter=",", skiprows=1)
    assert np.allclose(prof[:, 1], 4.0) and np.allclose(prof[:, 2], 0.0)
    path = np.loadtxt(tmp_path / "path.csv", delimiter=",", skiprows=1)
    assert np.allclose(np.diff(path[:, 1]), 0.4)


def test_export_trial_corridors(short_trial, tmp_path):
    _, res = short_trial
    export_plots(res, tmp_path)
    geo = np.loadtxt(tmp_path / "corridors.csv", delimiter=",", skiprows=1)
    assert len(np.unique(geo[:, 0])) == len(res.artifacts["corridors"])
    assert np.all(geo[:, 6] > 0) and np.all(geo[:, 8] >= 0)


def test_results_csv_roundtrip(short_trial, tmp_path):
    _, res = short_trial
    write_results_csv(tmp_path / "r.csv", [res])
    with open(tmp_path / "r.csv") as fh:
        row = next(csv.DictReader(fh))
    assert row["success"] == "True" and float(row["flight_time"]) == pytest.approx(res.flight_time)


def test_trial_spec_validation():
    with pytest.raises(ValueError):
        TrialSpec(v_max=0.0)
    with pytest.raises(ValueError):
        TrialSpec(goal=np.array([100.0, 0, 2.5]))
    spec = TrialSpec(seed=9, v_max=7.0)
    forest, opt = spec.resolved()
    assert forest.seed == 9 and opt.v_max == 7.0
    assert np.allclose(spec.start, (-30, 0, 2.5)) and np.allclose(spec.goal, (30, 0, 2.5))
