import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corridorplan.trajopt.minco import Trajectory, minco_construct
from oracles import effort, feasible_perturbation_basis, kkt_min_effort


def random_instance(r, m, s):
    q = r.normal(0, 2, (m - 1, 3))
    T = r.uniform(0.3, 2.0, m)
    d0 = r.normal(0, 1, (s, 3))
    dg = r.normal(0, 1, (s, 3))
    return q, T, d0, dg


def test_smoothstep_order2():
    traj = minco_construct(np.empty((0, 3)), [1.0], np.zeros(3), np.ones(3), s=2)
    expected = np.array([0.0, 0.0, 3.0, -2.0])
    assert np.allclose(traj.coeffs[0], expected[:, None] * np.ones(3), atol=1e-9, rtol=0)


def test_zero_trajectory():
    traj = minco_construct(np.empty((0, 3)), [2.0], np.zeros((4, 3)), np.zeros((4, 3)), s=4)
    assert np.abs(traj.coeffs).max() == 0.0
    assert traj.energy() == 0.0


@pytest.mark.parametrize("s", [2, 3, 4])
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_matches_kkt_oracle(s, m):
    r = np.random.default_rng(100 * s + m)
    q, T, d0, dg = random_instance(r, m, s)
    traj = minco_construct(q, T, d0, dg, s)
    ref = kkt_min_effort(q, T, d0, dg, s)
    assert np.allclose(traj.coeffs, ref, rtol=1e-7, atol=1e-7 * np.abs(ref).max())


@given(seed=st.integers(0, 2**31 - 1), m=st.integers(1, 6), s=st.integers(2, 4))
def test_junction_continuity(seed, m, s):
    r = np.random.default_rng(seed)
    q, T, d0, dg = random_instance(r, m, s)
    traj = minco_construct(q, T, d0, dg, s)
    for i in range(m - 1):
        left = traj.piece_state(i, T[i], 2 * s - 1)
        right = traj.piece_state(i + 1, 0.0, 2 * s - 1)
        scale = np.maximum(np.abs(left), 1.0)
        assert np.all(np.abs(left - right) <= 1e-9 * scale)
        assert np.allclose(left[0], q[i], atol=1e-9 * max(1, np.abs(q[i]).max()))
    assert np.allclose(traj.piece_state(0, 0.0), d0, atol=1e-9)
    assert np.allclose(traj.piece_state(m - 1, T[-1]), dg, atol=1e-8 * max(1, np.abs(dg).max()))


@pytest.mark.parametrize("s", [2, 3, 4])
def test_optimal_against_feasible_perturbations(s):
    r = np.random.default_rng(s)
    for m in (1, 2, 3, 4):
        q, T, d0, dg = random_instance(r, m, s)
        traj = minco_construct(q, T, d0, dg, s)
        base = effort(traj.coeffs, T, s)
        assert traj.energy() == pytest.approx(base, rel=1e-8)
        N = feasible_perturbation_basis(T, s)
        if N.shape[1] == 0:
            continue
        for _ in range(100):
            z = r.normal(size=(N.shape[1], 3)) * r.choice([1e-3, 1e-1, 1.0])
            pert = traj.coeffs + (N @ z).reshape(m, 2 * s, 3)
            assert effort(pert, T, s) >= base * (1 - 1e-10) - 1e-10


def test_sampling_and_evaluate_agree():
    r = np.random.default_rng(3)
    q, T, d0, dg = random_instance(r, 3, 4)
    traj = minco_construct(q, T, d0, dg, 4)
    t, d = traj.sample(0.05, orders=3)
    assert t[0] == 0 and t[-1] == pytest.approx(traj.total_duration)
    for k in (0, 7, len(t) - 1):
        for o in range(3):
            assert np.allclose(d[o, k], traj.evaluate(t[k], o))
    assert np.allclose(traj.junction_times, np.cumsum(T)[:-1])


def test_json_roundtrip(tmp_path):
    r = np.random.default_rng(4)
    traj = minco_construct(*random_instance(r, 3, 4), s=4)
    traj.to_json(tmp_path / "t.json")
    back = Trajectory.from_json(tmp_path / "t.json")
    assert np.array_equal(back.coeffs, traj.coeffs) and np.array_equal(back.durations, traj.durations)
    traj.dump_csv(tmp_path / "t.csv", dt=0.1)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,z,vx,vy,vz,ax,ay,az"


def test_input_validation():
    with pytest.raises(ValueError):
        minco_construct(np.zeros((1, 3)), [1.0], np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        minco_construct(np.empty((0, 3)), [-1.0], np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        minco_construct(np.empty((0, 3)), [1.0], np.zeros((2, 3)), np.zeros(3), s=4)


def test_many_pieces_well_conditioned():
    r = np.random.default_rng(9)
    m = 60
    q = np.cumsum(r.normal(0, 1, (m - 1, 3)), axis=0)
    T = r.uniform(0.05, 3.0, m)
    traj = minco_construct(q, T, np.zeros(3), q[-1] + 1, 4)
    for i in range(m - 1):
        assert np.allclose(traj.piece_state(i, T[i])[0], q[i], atol=1e-7)
