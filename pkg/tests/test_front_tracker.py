import math

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import place
from flocktrack import front_tracker as ft
from flocktrack.functionals import Case, classify_event, sample
from flocktrack.wave_algebra import (Family, ModelParams, State, apply_wave, h,
                                     wave_residual)

ASINH_HALF = math.asinh(0.5)


def smooth_state(nu=0, quantum=0.0, dt0=0.1, n0=8):
    params = ModelParams(1.0, 1.0)
    return ft.init_from_data(lambda y: 1 / (1 + 0.4 * np.sin(2 * np.pi * y) ** 2),
                             lambda y: 0.3 * np.cos(2 * np.pi * y) + 0.1 * np.sin(6 * y),
                             nu, params, eta0=0.1, dt0=dt0, n0=n0, quantum0=quantum)


def test_constant_datum_has_no_fronts():
    s = ft.init_from_data(lambda y: np.full_like(y, 2.0), lambda y: np.zeros_like(y), 1,
                          ModelParams(1.0, 1.0))
    assert s.n_fronts == 0 and sample(s).L == 0.0


def test_velocity_jump_gives_two_equal_shocks(cells):
    s = cells([1.0, 1.0], [1.0, -1.0])
    assert list(s.fam) == [1, 2]
    assert s.eps == pytest.approx([-ASINH_HALF, -ASINH_HALF], abs=1e-12)
    assert s.consistency_residual() < 1e-14


def test_step_bound_rejected():
    with pytest.raises(ft.ConfigurationError):
        ft.init_from_data(lambda y: np.ones_like(y), lambda y: np.zeros_like(y), 0,
                          ModelParams(1.0, 1.0), dt0=1.5, q=1.0)


def test_nonpositive_volume_rejected():
    with pytest.raises(ft.DomainError):
        ft.init_from_data(lambda y: y - 0.5, lambda y: 0 * y, 0, ModelParams(1.0, 1.0))


def manual(fams, sizes, positions, speeds, dt=1.0):
    """A bare state whose fronts move with prescribed speeds (states are not checked)."""
    n = len(fams)
    s = ft.SimState(ModelParams(1.0, 1.0), eta=0.5, dt=dt)
    s.fam = np.array(fams, np.int8)
    s.eps = np.array(sizes, float)
    s.fid = np.arange(n)
    s.birth = np.zeros(n)
    s.defer = np.ones(n)
    s.u, s.v = np.ones(n + 1), np.zeros(n + 1)
    return place(s, positions, speeds)


def test_next_event_examples():
    s = manual([2, 1], [-0.1, -0.1], [0.4, 0.6], [1.0, -1.0])
    ev = ft.next_event(s)
    assert ev.type is ft.EventType.COLLISION and ev.time == pytest.approx(0.1)
    assert s.positions(ev.time)[0] == pytest.approx(0.5)

    ev = ft.next_event(manual([], [], [], [], dt=0.25))
    assert ev.type is ft.EventType.TIME_STEP and ev.time == 0.25

    ev = ft.next_event(manual([2], [0.01], [0.9], [1.0]))
    assert ev.type is ft.EventType.BOUNDARY_EXIT and ev.time == pytest.approx(0.1)


def test_time_step_wins_ties():
    s = manual([2, 1], [-0.1, -0.1], [0.25, 0.75], [2.5, -2.5], dt=0.1)
    assert ft.collision_times(s)[0] == 0.1
    assert ft.next_event(s).type is ft.EventType.TIME_STEP


def _collide(s, log):
    place(s, [0.5, 0.5])
    return ft.handle_collision(s, 0, log)


def test_shock_overtaking_rarefaction_to_shock(cells):
    left = State(1.0, 0.0)
    mid = apply_wave(left, Family.TWO, -0.2, 1.0)
    right = apply_wave(mid, Family.TWO, 0.05, 1.0)
    s = cells([left.u, mid.u, right.u], [left.v, mid.v, right.v])
    log = ft.EventLog()
    _collide(s, log)
    rec = classify_event(log[0], q=0.25)
    assert rec.case is Case.SR_TO_S and rec.ok
    assert rec.dL <= -4 * 0.05 / (math.cosh(0.25) + 1)
    assert s.consistency_residual() < 1e-12


def test_shock_into_larger_rarefaction(cells):
    left = State(1.0, 0.0)
    mid = apply_wave(left, Family.TWO, -0.02, 1.0)
    right = apply_wave(mid, Family.TWO, 0.05, 1.0)
    s = cells([left.u, mid.u, right.u], [left.v, mid.v, right.v])
    log = ft.EventLog()
    _collide(s, log)
    rec = classify_event(log[0], q=0.1)
    assert rec.case is Case.SR_TO_R
    assert rec.dL == pytest.approx(-0.04, abs=1e-12)


def test_opposite_shocks_cross_unchanged(cells):
    left = State(1.0, 0.5)
    mid = apply_wave(left, Family.TWO, -0.3, 1.0)
    right = apply_wave(mid, Family.ONE, -0.2, 1.0)
    s = cells([left.u, mid.u, right.u], [left.v, mid.v, right.v])
    log = ft.EventLog()
    _collide(s, log)
    assert list(s.fam) == [1, 2]
    assert s.eps == pytest.approx([-0.2, -0.3], abs=1e-15)
    assert log[0].delta_L == 0.0
    assert s.consistency_residual() < 1e-14


def test_time_step_example_rarefaction(cells):
    params = ModelParams(1.0, 1.0)
    s = cells([1.0, math.exp(-0.2)], [0.0, 0.2], params=params, eta=0.2, dt=0.01)
    assert s.eps == pytest.approx([0.1])
    s.time = 0.01
    log = ft.EventLog()
    ft.handle_time_step(s, log)
    oracle = brentq(lambda e: 2 * math.sinh(e - 0.1) + 2 * e - 0.198, 0, 0.2, xtol=1e-16)
    assert list(s.fam) == [1, 2]
    assert s.eps[1] == pytest.approx(oracle, abs=1e-12)
    assert s.eps[1] == pytest.approx(0.0995, abs=1e-4)
    assert s.eps[0] == pytest.approx(oracle - 0.1, abs=1e-12)
    assert s.eps[0] == pytest.approx(-0.0005, abs=1e-5)
    deficit = 0.1 - s.eps[1]
    assert deficit == pytest.approx(abs(s.eps[0]), abs=1e-14)
    assert deficit <= 0.5 * 0.01 * 0.1
    assert len(log) == 1 and abs(log[0].delta_L) < 1e-15


def test_time_step_scales_constant_state(cells):
    s = cells([1.5], [2.0], dt=0.1)
    s.time = 0.1
    ft.handle_time_step(s)
    assert s.v == pytest.approx([1.8]) and s.u == pytest.approx([1.5]) and s.n_fronts == 0


def test_shock_reflection_at_time_step(cells):
    q = 1.0
    left = State(1.0, 0.0)
    right = apply_wave(left, Family.TWO, -0.3, 1.0)
    s = cells([left.u, right.u], [left.v, right.v], dt=0.05)
    s.time = 0.05
    ft.handle_time_step(s)
    refl = s.eps[0]
    assert refl > 0  # a 1-rarefaction
    assert refl >= 0.05 * (1 / (1 + math.cosh(q))) * 0.3


def test_time_step_scales_momentum_exactly():
    for quantum in (0.0, 0.05):
        s = smooth_state(quantum=quantum)
        s.v += 0.3  # nonzero mean to make the check meaningful
        s.time = s.dt
        before = float(np.dot(s.widths(), s.v))
        ft.handle_time_step(s)
        after = float(np.dot(s.widths(), s.v))
        assert after == pytest.approx((1 - s.dt) * before, abs=1e-14)
        assert s.consistency_residual() < 1e-12


def test_boundary_exit_drops_L(cells):
    s = cells([1.0, 1.0], [0.0, 0.0])
    s.fam = np.array([2], np.int8)
    right = apply_wave(State(1.0, 0.0), Family.TWO, -0.1, 1.0)
    s.u, s.v = np.array([1.0, right.u]), np.array([0.0, right.v])
    s.eps, s.fid, s.birth, s.defer = np.array([-0.1]), np.array([0]), np.zeros(1), np.ones(1)
    place(s, [0.9], [1.0])
    log = ft.EventLog()
    s.time = 0.1
    ft.handle_boundary(s, 0, log)
    assert s.n_fronts == 0 and s.u == pytest.approx([right.u])
    assert log[0].delta_L == pytest.approx(-0.1)
    assert s.exited == [(0.1, "left", 2, -0.1)]


def test_zero_front_run_decays_velocity(cells):
    s = cells([1.0], [1.0], dt=0.1)
    traj = ft.run(s, 1.0, [1.0])
    assert traj.snapshots[-1].v[0] == pytest.approx(0.9 ** 10, rel=1e-12)
    assert traj.boundary.P_a == pytest.approx(traj.boundary.P_b)


def test_two_shock_hand_stepped(cells):
    dt = 0.3
    s = cells([1.0, 1.0], [1.0, -1.0], dt=dt)
    traj = ft.run(s, 0.35, [0.35])
    log = traj.log
    # the two shocks are too slow to reach the walls before the first step
    umid = math.exp(-2 * ASINH_HALF)
    speed = 1 / math.sqrt(umid)
    assert 0.5 / speed > dt
    e = [log[0], log[1]]
    assert all(x.type is ft.EventType.TIME_STEP and x.time == dt for x in e)
    # hand re-resolution with damped velocities (1, 0.7) | (umid, 0) | (1, -0.7)
    c = 1 - dt
    for entry, (l, r) in zip(e, [((1.0, c), (umid, 0.0)), ((umid, 0.0), (1.0, -c))]):
        d = 0.5 * math.log(r[0] / l[0])
        w = r[1] - l[1]
        x = brentq(lambda x: h(x) + h(x - d) - w, -3, 3, xtol=1e-16)
        assert [o.size for o in entry.outgoing] == pytest.approx([x, x - d], abs=1e-12)
        assert entry.position == pytest.approx(0.5 + (-1 if entry is e[0] else 1) * speed * dt)
    # third event: one of the damped main shocks reaches a wall (mirror images, so
    # both exit within rounding of each other)
    third, fourth = log[2], log[3]
    assert {third.position, fourth.position} == {0.0, 1.0}
    assert all(x.type is ft.EventType.BOUNDARY_EXIT for x in (third, fourth))
    y0 = 0.5 - speed * dt
    assert third.time == pytest.approx(fourth.time, abs=1e-12)
    assert 0 < third.time - dt < y0  # the shocks move faster than unit speed


def test_quantum_defers_small_reflections():
    exact = smooth_state(quantum=0.0)
    lumped = smooth_state(quantum=0.05)
    for s in (exact, lumped):
        s.time = s.dt
        ft.handle_time_step(s)
    assert lumped.n_fronts < exact.n_fronts
    assert np.any(lumped.defer < 1)
    assert lumped.consistency_residual() < 1e-12


def test_run_invariants_exact_mode():
    s = smooth_state(quantum=0.0, dt0=0.2, n0=6)
    traj = ft.run(s, 0.5, np.linspace(0, 0.5, 11), check_every=1, track_interfaces=True)
    assert traj.log.delta_L.max() <= 1e-12
    assert traj.interface_residual < 1e-12
    for snap in traj.snapshots:
        assert np.all(np.diff(snap.positions) >= -1e-12)
        assert np.all(snap.eps[snap.eps > 0] <= s.eta * (1 + 1e-12))
    for e in traj.log:
        if e.type is ft.EventType.TIME_STEP and e.incoming[0].size > 0:
            w = e.incoming[0]
            main = sum(o.size for o in e.outgoing if o.family == w.family)
            assert 0 <= w.size - main <= 0.5 * s.params.damping * s.dt * w.size + 1e-15


def test_run_is_deterministic():
    logs = []
    for _ in range(2):
        traj = ft.run(smooth_state(nu=1, quantum=0.02), 3.0, [3.0])
        logs.append([e.to_json() for e in traj.log])
    assert logs[0] == logs[1]


def test_event_cap():
    with pytest.raises(ft.EventCapExceeded):
        ft.run(smooth_state(quantum=0.02), 3.0, [3.0], max_events=10)


def test_speeds_match_states():
    s = smooth_state(nu=1, quantum=0.02)
    traj = ft.run(s, 1.3, [1.3])
    fin = traj.final
    for k in range(fin.n_fronts):
        lam = -(fin.v[k + 1] - fin.v[k]) / (fin.u[k + 1] - fin.u[k])
        assert fin.spd[k] == pytest.approx(lam, rel=1e-9)
        assert wave_residual(fin.state(k), fin.state(k + 1), Family(int(fin.fam[k])),
                             float(fin.eps[k]), 1.0) < 1e-10


def test_jsonl_round_trip(tmp_path):
    traj = ft.run(smooth_state(quantum=0.02), 1.0, [1.0])
    path = tmp_path / "events.jsonl"
    traj.log.write_jsonl(path)
    import json
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == len(traj.log)
    assert set(rows[0]) == {"time", "type", "incoming", "outgoing", "position"}
    assert rows[0]["type"] in {"collision", "time_step", "boundary_exit"}


def test_trajectory_csv(tmp_path):
    traj = ft.run(smooth_state(quantum=0.02), 0.5, [0.0, 0.5])
    ft.write_trajectory_csv(tmp_path / "t.csv", traj)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,k,y_left,y_right,u,v"
    assert len(lines) == 1 + sum(len(sn.u) for sn in traj.snapshots)
