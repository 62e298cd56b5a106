import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from flocktrack.wave_algebra import (
    ContractViolation, DomainError, Family, Kind, ModelParams, State, apply_wave, front_speed,
    h, lagrangian_speed, reflection_coefficient, solve_riemann, solve_riemann_vec,
    split_rarefaction, v_jump, vacuum_shock_study, wave_residual, wave_size)

E2 = math.exp(2.0)
ASINH_HALF = math.asinh(0.5)

sizes = st.floats(-5, 5, allow_nan=False)
volumes = st.floats(1e-3, 1e3)
velocities = st.floats(-10, 10)
families = st.sampled_from([Family.ONE, Family.TWO])


def test_wave_size_examples():
    assert wave_size(1.0, 1.0, Family.ONE) == 0.0
    assert wave_size(1.0, E2, Family.ONE) == pytest.approx(1.0, abs=1e-15)
    assert wave_size(1.0, E2, Family.TWO) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(DomainError):
        wave_size(0.0, 1.0, Family.ONE)


def test_v_jump_examples():
    assert v_jump(0.5, 1.0) == pytest.approx(1.0)
    # shock branch against the direct formula sqrt(ul/ur) - sqrt(ur/ul) with ur/ul = e^{-2 eps}
    eps = -ASINH_HALF
    ratio = math.exp(2 * eps)  # u_r / u_l for a family-1 shock
    assert v_jump(eps, 1.0) == pytest.approx(math.sqrt(ratio) - math.sqrt(1 / ratio))
    assert v_jump(eps, 1.0) == pytest.approx(-1.0, abs=1e-15)
    assert v_jump(0.0, 3.0) == 0.0


def test_apply_wave_examples():
    s = apply_wave(State(1.0, 0.0), Family.ONE, 1.0, 1.0)
    assert s.u == pytest.approx(E2) and s.v == pytest.approx(2.0)
    s = apply_wave(State(1.0, 0.0), Family.TWO, 0.1, 1.0)
    assert s.u == pytest.approx(math.exp(-0.2)) and s.v == pytest.approx(0.2)
    assert apply_wave(State(2.5, -1.0), Family.TWO, 0.0, 1.7) == State(2.5, -1.0)


def test_solve_riemann_examples():
    assert solve_riemann(State(1.3, 0.2), State(1.3, 0.2), 1.0) == (0.0, 0.0)
    # symmetric compression: oracle from bisection on 4 sinh(eps) = -2
    oracle = brentq(lambda e: 4 * math.sinh(e) + 2, -2, 0, xtol=1e-15)
    e1, e2 = solve_riemann(State(1.0, 1.0), State(1.0, -1.0), 1.0)
    assert e1 == pytest.approx(oracle, abs=1e-12) and e2 == pytest.approx(oracle, abs=1e-12)
    assert e1 == pytest.approx(-0.481212, abs=1e-6)
    mid = apply_wave(State(1.0, 1.0), Family.ONE, e1, 1.0)
    assert mid.u == pytest.approx(0.381966, abs=1e-6) and mid.v == pytest.approx(0.0, abs=1e-12)
    e1, e2 = solve_riemann(State(1.0, -1.0), State(1.0, 1.0), 1.0)
    assert (e1, e2) == (pytest.approx(0.5), pytest.approx(0.5))
    mid = apply_wave(State(1.0, -1.0), Family.ONE, e1, 1.0)
    assert mid.u == pytest.approx(math.e) and mid.v == pytest.approx(0.0, abs=1e-12)


def test_front_speed_examples():
    left, right = State(1.0, 0.0), State(4.0, 0.0)
    eps2 = wave_size(1.0, 4.0, Family.TWO)
    right2 = apply_wave(left, Family.TWO, eps2, 1.0)
    assert front_speed(left, right2, Family.TWO, Kind.SHOCK, 1.0) == pytest.approx(0.5)
    eps1 = wave_size(1.0, 4.0, Family.ONE)
    right1 = apply_wave(left, Family.ONE, eps1, 1.0)
    assert front_speed(left, right1, Family.ONE, Kind.RAREFACTION, 1.0) < 0
    # rarefaction: log mean (4 - 1)/ln 4
    assert lagrangian_speed(1.0, 4.0, Family.ONE, 1.0) == pytest.approx(-math.log(4.0) / 3.0)
    assert lagrangian_speed(2.0, 2.0, Family.TWO, 3.0) == pytest.approx(1.5)
    with pytest.raises(ContractViolation):
        front_speed(left, right, Family.TWO, Kind.SHOCK, 1.0)  # v jump missing
    with pytest.raises(ContractViolation):
        front_speed(left, right2, Family.TWO, Kind.RAREFACTION, 1.0)


def test_rarefaction_speed_conserves_volume_flux():
    # -[v]/[u] reproduces the log-mean speed exactly
    left = State(0.8, 0.1)
    right = apply_wave(left, Family.TWO, 0.07, 1.3)
    s = lagrangian_speed(left.u, right.u, Family.TWO, 1.3)
    assert s == pytest.approx(-(right.v - left.v) / (right.u - left.u), rel=1e-13)


def test_split_rarefaction_examples():
    assert split_rarefaction(0.25, 0.1) == [0.25 / 3] * 3
    assert split_rarefaction(0.1, 0.1) == [0.1]
    assert split_rarefaction(1.0, 0.3) == [0.25] * 4
    with pytest.raises(DomainError):
        split_rarefaction(-0.1, 0.1)


def test_vacuum_study_examples():
    s, = vacuum_shock_study(1.0, 0.0, 1.0, [0.01])
    assert s.v_right == pytest.approx(-9.9) and s.sigma == pytest.approx(0.1)
    s, = vacuum_shock_study(1.0, 5.0, 1.0, [0.04])
    assert s.sigma == pytest.approx(5.2)
    with pytest.raises(DomainError):
        vacuum_shock_study(1.0, 0.0, 1.0, [1.5])


def test_vacuum_study_rate():
    deltas = 10.0 ** -np.arange(2, 9)
    samples = vacuum_shock_study(2.0, -0.3, 1.5, deltas)
    gaps = np.array([s.sigma + 0.3 for s in samples])
    slope = np.polyfit(np.log(deltas), np.log(gaps), 1)[0]
    assert abs(slope - 0.5) < 1e-6


def test_model_params_validation():
    with pytest.raises(DomainError):
        ModelParams(alpha=0.0, M=1.0)
    assert ModelParams(2.0, 3.0, 0.5).damping == 1.5


@given(volumes, families, sizes, st.floats(0.1, 5))
def test_round_trip(u, fam, eps, alpha):
    out = apply_wave(State(u, 0.0), fam, eps, alpha)
    assert wave_size(u, out.u, fam) == pytest.approx(eps, abs=1e-13)


@given(volumes, families, st.floats(-5, -1e-6))
def test_lax_admissibility(u, fam, eps):
    out = apply_wave(State(u, 0.0), fam, eps, 1.0)
    assert (out.u < u) if fam is Family.ONE else (out.u > u)


@settings(max_examples=300)
@given(volumes, velocities, st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 4))
def test_riemann_recovers_composition(u, v, e1, e2, alpha):
    left = State(u, v)
    right = apply_wave(apply_wave(left, Family.ONE, e1, alpha), Family.TWO, e2, alpha)
    r1, r2 = solve_riemann(left, right, alpha)
    assert r1 == pytest.approx(e1, abs=1e-11) and r2 == pytest.approx(e2, abs=1e-11)


@settings(max_examples=300)
@given(volumes, velocities, volumes, velocities, st.floats(0.2, 4))
def test_riemann_residuals(ul, vl, ur, vr, alpha):
    e1, e2 = solve_riemann(State(ul, vl), State(ur, vr), alpha)
    assert abs(2 * e1 - 2 * e2 - math.log(ur / ul)) <= 1e-12 * max(1, abs(math.log(ur / ul)))
    assert abs(alpha * (h(e1) + h(e2)) - (vr - vl)) <= 1e-12 * max(1.0, abs(vr - vl)) * alpha + 1e-13


def test_vectorised_solver_matches_scalar():
    rng = np.random.default_rng(3)
    dlog = rng.uniform(-4, 4, 500)
    dv = rng.uniform(-6, 6, 500)
    e1, e2 = solve_riemann_vec(dlog, dv, 1.7)
    for k in range(500):
        s1, s2 = solve_riemann(State(1.0, 0.0), State(math.exp(dlog[k]), dv[k]), 1.7)
        assert e1[k] == pytest.approx(s1, abs=1e-12) and e2[k] == pytest.approx(s2, abs=1e-12)


@settings(max_examples=300)
@given(families, st.floats(-1.5, -1e-4), st.floats(1e-4, 0.5), st.booleans())
def test_interaction_identities_and_reflection_bound(fam, a_s, beta, shock_first):
    alpha = 1.0
    left = State(1.0, 0.0)
    first, second = (a_s, beta) if shock_first else (beta, a_s)
    mid = apply_wave(left, fam, first, alpha)
    right = apply_wave(mid, fam, second, alpha)
    e1, e2 = solve_riemann(left, right, alpha)
    plus, refl = (e1, e2) if fam is Family.ONE else (e2, e1)
    assert plus - refl == pytest.approx(a_s + beta, abs=1e-10)
    assert h(refl) + h(plus) == pytest.approx(h(a_s) + h(beta), abs=1e-10)
    assert abs(refl) <= reflection_coefficient(abs(a_s)) * min(abs(a_s), beta) + 1e-12


def test_opposite_family_crossing_preserves_sizes():
    # a 2-shock followed by a 1-shock; resolving the outer states swaps them unchanged
    left = State(1.2, 0.3)
    mid = apply_wave(left, Family.TWO, -0.3, 1.0)
    right = apply_wave(mid, Family.ONE, -0.2, 1.0)
    e1, e2 = solve_riemann(left, right, 1.0)
    assert e1 == pytest.approx(-0.2, abs=1e-12) and e2 == pytest.approx(-0.3, abs=1e-12)


def test_residual_detects_mismatch():
    left = State(1.0, 0.0)
    right = apply_wave(left, Family.ONE, 0.2, 1.0)
    assert wave_residual(left, right, Family.ONE, 0.2, 1.0) < 1e-15
    assert wave_residual(left, State(right.u, right.v + 1e-3), Family.ONE, 0.2, 1.0) > 9e-4
