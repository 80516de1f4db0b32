import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corridorplan.corridor import (
    Corridor,
    SamplerConfig,
    Sphere,
    batch_sample,
    generate_corridor,
    generate_one_sphere,
    lens_volume,
    lens_volumes,
    sample_candidates,
    sampler_frame,
    score,
)
from corridorplan.errors import BatchSampleFailed, CorridorError, SphereRejectedError
from corridorplan.pathsearch import GuidePath, astar
from corridorplan.world import WorldModel, forest_bounds, ForestSpec

BIG = ((-30.0, -30.0, -30.0), (30.0, 30.0, 30.0))


def mc_lens(a, b, n, rng):
    """Monte-Carlo intersection volume, sampling the smaller sphere's bounding box."""
    small = a if a.radius <= b.radius else b
    pts = small.center + rng.uniform(-small.radius, small.radius, (n, 3))
    inside = (np.linalg.norm(pts - a.center, axis=1) <= a.radius) & (np.linalg.norm(pts - b.center, axis=1) <= b.radius)
    return inside.mean() * (2 * small.radius) ** 3


def sphere(c, r):
    c = np.asarray(c, dtype=float)
    return Sphere(c, c + (r, 0, 0), r)


def test_one_sphere_eq6():
    w = WorldModel(BIG, points=[(3.0, 0.0, 0.0)])
    s = generate_one_sphere(w, (0, 0, 0), SamplerConfig(drone_radius=0.3))
    assert s.radius == pytest.approx(2.7)
    assert np.allclose(s.nearest, (3, 0, 0))


def test_one_sphere_zero_drone_radius():
    w = WorldModel(BIG, points=[(0.0, 2.2, 0.0)])
    assert generate_one_sphere(w, (0, 0, 0), SamplerConfig(drone_radius=0.0)).radius == pytest.approx(2.2)


def test_one_sphere_empty_world_cap():
    s = generate_one_sphere(WorldModel(BIG), (0, 0, 0), SamplerConfig(max_radius_cap=10))
    assert s.radius == 10.0


def test_one_sphere_far_obstacle_cap():
    w = WorldModel(BIG, points=[(25.0, 0.0, 0.0)])
    assert generate_one_sphere(w, (0, 0, 0), SamplerConfig()).radius == 10.0


def test_one_sphere_rejects_small():
    w = WorldModel(BIG, points=[(0.45, 0.0, 0.0)])
    with pytest.raises(SphereRejectedError):
        generate_one_sphere(w, (0, 0, 0), SamplerConfig(drone_radius=0.3, min_radius=0.2))


def test_lens_examples():
    assert lens_volume(sphere((0, 0, 0), 1), sphere((1, 0, 0), 1)) == pytest.approx(5 * math.pi / 12, rel=1e-12)
    assert lens_volume(sphere((0, 0, 0), 1), sphere((2, 0, 0), 1)) == 0.0
    assert lens_volume(sphere((0, 0, 0), 1), sphere((5, 0, 0), 1)) == 0.0
    assert lens_volume(sphere((1, 2, 3), 1.7), sphere((1, 2, 3), 1.7)) == pytest.approx(4 / 3 * math.pi * 1.7**3)
    # one inside the other
    assert lens_volume(sphere((0, 0, 0), 3), sphere((0.5, 0, 0), 1)) == pytest.approx(4 / 3 * math.pi)


def test_lens_monte_carlo(rng):
    for _ in range(5):
        a = sphere(rng.normal(size=3), rng.uniform(0.5, 2))
        b = sphere(a.center + rng.normal(size=3) * 0.8, rng.uniform(0.5, 2))
        exact = lens_volume(a, b)
        if exact < 0.05:
            continue
        assert mc_lens(a, b, 400_000, rng) == pytest.approx(exact, rel=0.02)


@given(
    ra=st.floats(0.01, 10), rb=st.floats(0.01, 10), d=st.floats(0, 25), grow=st.floats(0, 5)
)
def test_lens_properties(ra, rb, d, grow):
    v = float(lens_volumes(ra, rb, d))
    assert v == pytest.approx(float(lens_volumes(rb, ra, d)), rel=1e-12, abs=1e-15)
    assert -1e-12 <= v <= 4 / 3 * math.pi * min(ra, rb) ** 3 * (1 + 1e-9)
    # a larger previous sphere never shrinks the overlap
    assert float(lens_volumes(ra + grow, rb, d)) >= v - 1e-9 * max(1.0, v)


def test_score_examples():
    cfg = SamplerConfig(weight_radius=1, weight_overlap=1)
    far = sphere((0, 0, 0), 1)
    assert score(sphere((10, 0, 0), 1), far, cfg) == pytest.approx(4 * math.pi / 3)
    assert score(Sphere((0.5, 0, 0), (1, 0, 0), 0.0), far, cfg) == 0.0
    cand, prev = sphere((1, 0, 0), 1), sphere((0, 0, 0), 1)
    doubled = SamplerConfig(weight_radius=1, weight_overlap=2)
    assert score(cand, prev, doubled) - score(cand, prev, cfg) == pytest.approx(lens_volume(cand, prev))


def test_sampler_frame_axes():
    axes, sig = sampler_frame((0, 0, 0), (3, 0, 0), 2.0)
    assert np.allclose(axes @ axes.T, np.eye(3), atol=1e-12)
    assert np.allclose(np.abs(axes[0]), (1, 0, 0))
    assert np.allclose(sig, (1.5, 0.75, 0.75))


def test_sampler_frame_degenerate():
    axes, sig = sampler_frame((1, 1, 1), (1, 1, 1), 2.0)
    assert np.allclose(sig, 0.5) and np.allclose(axes @ axes.T, np.eye(3))


def test_sampler_moments():
    rng = np.random.default_rng(0)
    pts = sample_candidates(rng, sphere((0, 0, 0), 2.0), (3, 0, 0), 100_000)
    mean = pts.mean(axis=0)
    assert np.abs(mean - (3, 0, 0)).max() < 0.02 * 3
    cov = np.cov(pts.T)
    expected = np.diag([1.5**2, 0.75**2, 0.75**2])
    assert np.allclose(np.diag(cov), np.diag(expected), rtol=0.02)
    assert np.abs(cov - np.diag(np.diag(cov))).max() < 0.02 * 0.75**2


@given(seed=st.integers(0, 2**31 - 1))
def test_sampler_covariance_rotated(seed):
    r = np.random.default_rng(seed)
    prev_c, guide = r.normal(size=3) * 3, r.normal(size=3) * 3
    axes, sig = sampler_frame(prev_c, guide, 1.0)
    pts = sample_candidates(r, sphere(prev_c, 1.0), guide, 100_000)
    sigma = axes.T @ np.diag(sig**2) @ axes
    err = np.abs(np.cov(pts.T) - sigma).max() / sig.max() ** 2
    assert err < 0.03


def test_batch_sample_empty_world(rng):
    cfg = SamplerConfig()
    s = batch_sample(WorldModel(BIG), sphere((0, 0, 0), 10), (12, 0, 0), cfg, rng)
    assert s.radius == cfg.max_radius_cap
    assert s.contains((12, 0, 0))


def test_batch_sample_total_rejection(rng):
    g = np.arange(-6, 6.01, 0.25)
    cloud = np.stack(np.meshgrid(g, g, g), -1).reshape(-1, 3)
    w = WorldModel(BIG, points=cloud)
    with pytest.raises(BatchSampleFailed):
        batch_sample(w, sphere((0, 0, 0), 2), (3, 0, 0), SamplerConfig(), rng)


def test_batch_sample_result_is_valid(dense_forest, rng):
    world, _ = dense_forest
    cfg = SamplerConfig()
    prev = generate_one_sphere(world, (-30, 0, 2.5), cfg)
    guide = np.array([-30 + prev.radius + 0.5, 0, 2.5])
    s = batch_sample(world, prev, guide, cfg, rng)
    _, d = world.nearest(s.center)
    assert s.radius >= cfg.min_radius
    assert d >= s.radius + cfg.drone_radius - 1e-9
    assert np.linalg.norm(s.center - prev.center) < s.radius + prev.radius
    assert s.contains(guide)


def test_corridor_empty_world_two_spheres(rng):
    w = WorldModel(((-5, -5, -5), (20, 5, 5)))
    path = astar(w, (0, 0, 0), (12, 0, 0))
    c = generate_corridor(w, path, (0, 0, 0), (12, 0, 0), SamplerConfig(), rng)
    assert len(c) == 2
    assert c[1].contains((12, 0, 0))


def test_corridor_goal_in_first_sphere(rng):
    w = WorldModel(((-5, -5, -5), (20, 5, 5)))
    path = astar(w, (0, 0, 0), (4, 0, 0))
    c = generate_corridor(w, path, (0, 0, 0), (4, 0, 0), SamplerConfig(), rng)
    assert len(c) == 1


def check_corridor(world, c, cfg):
    for s in c.spheres:
        d = np.linalg.norm(world.points - s.center, axis=1).min()
        assert d >= s.radius + cfg.drone_radius - 1e-9
        assert s.radius >= cfg.min_radius - 1e-12
    assert np.all(c.overlaps() > 0)


def test_corridor_forest_safety(dense_forest, rng):
    world, _ = dense_forest
    cfg = SamplerConfig()
    start, goal = np.array([-30, 0, 2.5]), np.array([30, 0, 2.5])
    path = astar(world, start, goal)
    for _ in range(3):
        c = generate_corridor(world, path, start, goal, cfg, rng)
        check_corridor(world, c, cfg)
        assert np.linalg.norm(c[0].center - start) < 1e-12 and c[-1].contains(goal)


def test_corridor_prefix_is_kept(dense_forest, rng):
    world, _ = dense_forest
    cfg = SamplerConfig()
    start, goal = np.array([-30, 0, 2.5]), np.array([-10, 0, 2.5])
    path = astar(world, start, goal)
    first = generate_corridor(world, path, start, goal, cfg, rng)
    prefix = first.spheres[:2]
    again = generate_corridor(world, path, start, goal, cfg, rng, prefix=prefix)
    assert again.reused_prefix_len == 2
    assert all(a is b for a, b in zip(again.spheres[:2], prefix))
    check_corridor(world, again, cfg)


def test_corridor_sampling_failure():
    # a wall the guide path crosses and no sphere can pass
    wall = np.array([[5.0, y, z] for y in np.arange(-5, 5.01, 0.1) for z in np.arange(-5, 5.01, 0.1)])
    w = WorldModel(((-5, -5, -5), (20, 5, 5)), points=wall)
    path = GuidePath(np.column_stack([np.arange(0, 12.0, 0.2), np.zeros(60), np.zeros(60)]))
    with pytest.raises(CorridorError):
        generate_corridor(w, path, (0, 0, 0), (11.8, 0, 0), SamplerConfig(max_radius_cap=3), np.random.default_rng(0))


def test_corridor_json_roundtrip(tmp_path):
    c = Corridor([sphere((0, 0, 0), 1), sphere((1, 0, 0), 1)])
    c.to_json(tmp_path / "c.json")
    back = Corridor.from_json(tmp_path / "c.json")
    assert np.allclose(back.centers, c.centers) and np.allclose(back.radii, c.radii)
    assert back.overlaps()[0] == pytest.approx(5 * math.pi / 12)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(batch_size=0)
    with pytest.raises(ValueError):
        SamplerConfig(weight_overlap=0)
    with pytest.raises(ValueError):
        Corridor([sphere((0, 0, 0), 1)], reused_prefix_len=2)


def test_forest_bounds_shape():
    lo, hi = forest_bounds(ForestSpec())
    assert lo[2] == 0 and hi[2] == 5
