import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corridorplan.corridor import Corridor, SamplerConfig, Sphere, generate_corridor
from corridorplan.pathsearch import astar
from corridorplan.trajopt.minco import minco_construct
from corridorplan.trajopt.optimizer import (
    Boundary,
    OptimizerConfig,
    OptimizerState,
    cost_terms,
    default_initialization,
    evaluate_cost,
    lens_center,
    optimize,
    profile_times,
    validate,
)
from helpers import random_problem


def sphere(c, r):
    c = np.asarray(c, dtype=float)
    return Sphere(c, c + (r, 0, 0), r)


def test_lens_center_unit_spheres():
    assert np.allclose(lens_center((0, 0, 0), 1, (1, 0, 0), 1), (0.5, 0, 0))


def test_lens_center_nested_and_coincident():
    assert np.allclose(lens_center((0, 0, 0), 3, (1, 0, 0), 1), (1, 0, 0))
    assert np.allclose(lens_center((2, 2, 2), 1, (2, 2, 2), 5), (2, 2, 2))


@given(
    c=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    r0=st.floats(0.3, 4),
    r1=st.floats(0.3, 4),
    frac=st.floats(0.05, 0.95),
    seed=st.integers(0, 1000),
)
def test_lens_center_inside_both(c, r0, r1, frac, seed):
    u = np.random.default_rng(seed).normal(size=3)
    u /= np.linalg.norm(u)
    c0 = np.asarray(c)
    c1 = c0 + frac * (r0 + r1) * u
    p = lens_center(c0, r0, c1, r1)
    assert np.linalg.norm(p - c0) <= r0 + 1e-9
    assert np.linalg.norm(p - c1) <= r1 + 1e-9


def test_default_initialization_distance_over_speed():
    corridor = Corridor([sphere((0, 0, 0), 10), sphere((20, 0, 0), 10)])
    init = default_initialization(corridor, v_max=5.0)
    assert np.allclose(init.q, [[10, 0, 0]])
    assert np.allclose(init.tau, math.log(2.0))


def test_default_initialization_zero_length_floor():
    corridor = Corridor([sphere((0, 0, 0), 1), sphere((1, 0, 0), 1)])
    init = default_initialization(corridor, v_max=5.0, start=(0.5, 0, 0))
    assert init.tau[0] == pytest.approx(math.log(1e-2))


def test_profile_times_trapezoid():
    v, a, total = 4.0, 2.0, 20.0
    s = np.linspace(0, total, 41)
    t = profile_times(s, v, a)
    assert t[0] == 0.0 and np.all(np.diff(t) > 0)
    assert t[-1] == pytest.approx(total / v + v / a)
    # accelerating phase: s = a t^2 / 2
    assert t[2] == pytest.approx(math.sqrt(2 * s[2] / a))


def test_profile_times_triangle_and_cruise():
    t = profile_times([0.0, 1.0, 2.0], 100.0, 2.0)
    assert t[-1] == pytest.approx(2 * math.sqrt(2 * 1.0 / 2.0))
    cruise = profile_times([0.0, 3.0, 9.0], 3.0, 1e9, v_start=3.0, v_end=3.0)
    assert np.allclose(cruise, [0, 1, 3], atol=1e-6)


def test_state_pack_roundtrip():
    st_ = OptimizerState(np.zeros(3), np.arange(6.0).reshape(2, 3))
    back = OptimizerState.unpack(st_.pack(), 3)
    assert np.array_equal(back.tau, st_.tau) and np.array_equal(back.q, st_.q)
    with pytest.raises(ValueError):
        OptimizerState(np.zeros(3), np.zeros((3, 3)))


@pytest.mark.parametrize("bad", [dict(rho_col=0.0), dict(v_max=-1.0), dict(order=1), dict(wolfe_c1=0.95)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        OptimizerConfig(**bad)


def test_validate_hover():
    p = np.array([1.0, 2.0, 3.0])
    bd = Boundary.rest(p, p)
    traj = minco_construct(np.array([p]), np.array([1.0, 1.0]), bd.start, bd.goal, 4)
    rep = validate(traj, Corridor([sphere(p, 1.0), sphere(p, 1.0)]))
    assert rep.max_speed == pytest.approx(0, abs=1e-12)
    assert rep.max_accel == pytest.approx(0, abs=1e-12)
    assert rep.max_corridor_violation == pytest.approx(-1.0)


def test_validate_constant_velocity_line():
    v = np.array([3.0, 0.0, 0.0])
    start = np.vstack([np.zeros(3), v, np.zeros((2, 3))])
    goal = np.vstack([3 * v, v, np.zeros((2, 3))])
    traj = minco_construct(np.array([v, 2 * v]), np.ones(3), start, goal, 4)
    rep = validate(traj)
    assert rep.max_speed == pytest.approx(3.0, abs=1e-9)
    assert rep.max_accel == pytest.approx(0.0, abs=1e-8)
    assert rep.max_corridor_violation == -np.inf
    assert rep.passes(3.0, 1.0) and not rep.passes(2.5, 1.0)
    with pytest.raises(ValueError):
        validate(traj, dt=0)


def test_cost_terms_sum_to_cost():
    r = np.random.default_rng(3)
    state, corridor, bd, cfg = random_problem(r, 4)
    f, _ = evaluate_cost(state, corridor, bd, cfg)
    assert sum(cost_terms(state, corridor, bd, cfg).values()) == pytest.approx(f, rel=1e-12)


@given(seed=st.integers(0, 2**31 - 1), m=st.integers(1, 6), literal=st.booleans())
def test_optimize_descends(seed, m, literal):
    r = np.random.default_rng(seed)
    state, corridor, bd, cfg = random_problem(r, m)
    cfg.literal_collision = literal
    res = optimize(state, corridor, bd, cfg)
    f0, _ = evaluate_cost(state, corridor, bd, cfg)
    assert res.initial_cost == pytest.approx(f0)
    assert res.cost <= f0 * (1 + 1e-12)
    assert np.all(res.trajectory.durations > 0) and np.all(np.isfinite(res.trajectory.coeffs))
    assert res.cost == pytest.approx(evaluate_cost(res.state, corridor, bd, cfg)[0], rel=1e-9)


def test_restart_from_optimum():
    corridor = Corridor([sphere((3.0 * i, 0.5 * (i % 2), 0), 2.0) for i in range(5)])
    start, goal = corridor[0].center, corridor[-1].center
    # moderate weights keep the absolute gradient tolerance reachable
    cfg = OptimizerConfig(rho_time=100.0, rho_vel=1e4, rho_acc=1e4, rho_col=1e5, v_max=5.0, a_max=10.0,
                          past=0, max_iterations=2000)
    state = default_initialization(corridor, cfg.v_max, start, goal, a_max=cfg.a_max)
    bd = Boundary.rest(start, goal)
    first = optimize(state, corridor, bd, cfg)
    assert first.converged
    again = optimize(first.state, corridor, bd, cfg)
    assert again.cost <= first.cost * (1 + 1e-12)
    assert again.iterations <= 2


def test_forest_corridor_plan(dense_forest, rng):
    world, _ = dense_forest
    start, goal = np.array([-30.0, 0, 2.5]), np.array([-5.0, 0, 2.5])
    cfg = OptimizerConfig(v_max=5.0)
    path = astar(world, start, goal)
    corridor = generate_corridor(world, path, start, goal, SamplerConfig(), rng)
    init = default_initialization(corridor, cfg.v_max, start, goal, a_max=cfg.a_max)
    res = optimize(init, corridor, Boundary.rest(start, goal), cfg)
    assert res.cost < res.initial_cost
    assert np.allclose(res.trajectory.evaluate(0.0), start)
    assert np.allclose(res.trajectory.evaluate(res.trajectory.total_duration), goal)
    rep = validate(res.trajectory, corridor)
    assert rep.passes(cfg.v_max, cfg.a_max)
    _, d = res.trajectory.sample(0.01, orders=1)
    assert world.clearance_many(d[0])[1].min() > 0.0
