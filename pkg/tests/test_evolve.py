import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glzs.analytic import lz_probability
from glzs.bloch import DOWN, UP, FieldPoint, StateVector, adiabatic_eigenbasis
from glzs.evolve import (ErrorOffsets, IntegratorConfig, ShotResult, apply_static_error, evolve,
                         final_state, measure_up, prep_error, prep_flips)
from glzs.schedule import (GlzsParams, Hold, OmegaSweep, Schedule, build_adiabatic_rotation,
                           build_glzs, build_lz_sweep, build_trace)
from glzs.units import khz, us


@pytest.fixture(scope="module")
def glzs_traj():
    return evolve(build_glzs(GlzsParams(phi_0=1.7)), DOWN)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(max_phase_per_step=0)
    with pytest.raises(ValueError):
        IntegratorConfig(record_stride=0)
    with pytest.raises(ValueError):
        IntegratorConfig(method="rk4")


def test_hold_eigenstate_stays_put():
    f = FieldPoint(khz(30), khz(-12), 0.4)
    minus = adiabatic_eigenbasis(f).psi_minus
    traj = evolve(Schedule((Hold(f, us(100)),), ("h",)), minus)
    assert np.abs(traj.p_plus_adiabatic).max() <= 1e-12


def test_trajectory_invariants(glzs_traj):
    t = glzs_traj
    assert t.times[0] == 0 and t.times[-1] == pytest.approx(t.schedule.duration)
    assert np.all(np.diff(t.times) >= 0)
    assert np.abs(t.p_up_bare + t.p_down_bare - 1).max() <= 1e-9
    assert t.norm_drift() <= 1e-10


def test_prep_rotation_reaches_ground_state(reference_fields):
    th = math.atan2(49.24, 8.68)
    seg = build_adiabatic_rotation(reference_fields["b_trace"], 0.0, th,
                                   reference_fields["prep_rate"])
    traj = evolve(Schedule((seg,), ("1",)), DOWN)
    assert 1 - traj.p_plus_adiabatic[-1] >= 0.99


def test_final_state_matches_trajectory(glzs_traj):
    psi = final_state(glzs_traj.schedule, DOWN)
    assert np.allclose(psi, glzs_traj.states[-1], atol=1e-13)


def test_step_halving_changes_populations_little():
    s = build_glzs(GlzsParams(phi_0=0.6))
    cfg = IntegratorConfig()
    a, b = evolve(s, DOWN, cfg), evolve(s, DOWN, cfg.halved())
    assert np.array_equal(a.times, b.times)
    assert np.abs(a.p_up_bare - b.p_up_bare).max() <= 1e-8
    assert np.abs(a.p_plus_adiabatic - b.p_plus_adiabatic).max() <= 1e-8


@pytest.mark.parametrize("method,order", [("midpoint", 2), ("cf4", 4)])
def test_self_convergence_order(method, order):
    seg = build_lz_sweep(khz(49.24), khz(8.68), us(90))
    s = Schedule((seg,), ("2",))
    cfg = IntegratorConfig(min_steps_per_segment=16, max_phase_per_step=10.0,
                           max_field_rotation_per_step=10.0, method=method)
    p = [final_state(s, DOWN, cfg if k == 0 else IntegratorConfig(
        **{**cfg.__dict__, "subdivide": 2 ** k}))[0] for k in range(3)]
    ratio = abs(p[0] - p[1]) / abs(p[1] - p[2])
    assert ratio == pytest.approx(2 ** order, rel=0.25)


def test_evolve_is_deterministic():
    s = build_glzs(GlzsParams(phi_0=2.2))
    a, b = evolve(s, DOWN), evolve(s, DOWN)
    assert np.array_equal(a.states, b.states)


def test_record_stride_keeps_segment_ends(glzs_traj):
    thin = evolve(glzs_traj.schedule, DOWN, IntegratorConfig(record_stride=50))
    assert len(thin) < len(glzs_traj) / 10
    for b in thin.schedule.boundaries[1:]:
        assert np.min(np.abs(thin.times - b)) <= 1e-15 * thin.schedule.duration + 1e-18
    assert np.allclose(thin.states[-1], glzs_traj.states[-1], atol=1e-14)


@given(st.floats(-2e5, 2e5), st.floats(-2e5, 2e5), st.floats(-3, 3), st.floats(1e-6, 2e-4),
       st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_time_reversal_of_hold(om, de, ph, dur, a, b):
    psi0 = StateVector(math.cos(b / 2), math.sin(b / 2) * complex(math.cos(a), math.sin(a)))
    fwd = Hold(FieldPoint(om, de, ph), dur)
    back = Hold(FieldPoint(-om, -de, ph), dur)
    psi = final_state(Schedule((fwd, back), ("f", "b")), psi0)
    assert np.abs(psi - psi0.array).max() <= 1e-10


def test_static_error_identity_and_scaling():
    s = Schedule((build_lz_sweep(khz(49.24), khz(8.68), us(90)),), ("2",))
    assert apply_static_error(s, ErrorOffsets()) is s
    e = apply_static_error(s, ErrorOffsets(0.5, khz(1.0)))
    (seg,) = e.segments
    assert isinstance(seg, OmegaSweep)
    assert seg.sweep_rate == pytest.approx(1.5 * s.segments[0].sweep_rate)
    assert seg.delta == pytest.approx(khz(9.68))
    assert e.duration == s.duration and e.labels == s.labels


def test_static_error_moves_lz_probability():
    p = GlzsParams()
    T = p.sweep_time()
    s = apply_static_error(build_glzs(p), ErrorOffsets(0.5, 0.0))
    a, b = s.stage("2")
    seg = s.segments[s.labels.index("2")]
    v = abs(seg.sweep_rate)
    assert lz_probability(p.delta_0, 2 * p.omega_i / T) == pytest.approx(0.5)
    assert lz_probability(p.delta_0, v) == pytest.approx(0.5 ** (1 / 1.5))
    assert lz_probability(p.delta_0, v) == pytest.approx(0.630, abs=5e-4)


def test_static_error_rejects_sign_flip():
    with pytest.raises(ValueError):
        ErrorOffsets(-1.0)


def test_measure_zero_and_one():
    assert measure_up(0.0, 500, seed=1).n_up == 0
    assert measure_up(1.0, 500, seed=1).n_up == 500


def test_measure_std_err():
    r = ShotResult(1500, 750)
    assert r.std_err == pytest.approx(math.sqrt(0.25 / 1500))
    assert round(r.std_err, 4) == 0.0129


def test_measure_is_deterministic_and_stream_split():
    a = measure_up(0.3, 100, seed=42)
    assert a == measure_up(0.3, 100, seed=42)
    draws = {measure_up(0.3, 100, seed=42, stream=k).n_up for k in range(20)}
    assert len(draws) > 3


def test_measure_statistics_against_binomial():
    from scipy.stats import binom
    n, p = 1500, 0.3
    counts = np.array([measure_up(p, n, seed=9, stream=k).n_up for k in range(400)])
    assert abs(counts.mean() - n * p) < 4 * math.sqrt(n * p * (1 - p) / len(counts))
    assert counts.var() == pytest.approx(binom.var(n, p), rel=0.2)


def test_measure_validation():
    with pytest.raises(ValueError):
        measure_up(1.5, 10, seed=0)
    with pytest.raises(ValueError):
        measure_up(0.5, 0, seed=0)


def test_prep_error_examples():
    assert prep_error(DOWN, 1.0, seed=3) is DOWN
    flipped = prep_error(DOWN, 0.0, seed=3)
    assert abs(flipped.overlap(DOWN)) == pytest.approx(0.0)
    assert abs(flipped.amp_up) == pytest.approx(1.0)
    frac = prep_flips(0.991, 100_000, seed=5).mean()
    assert abs(frac - 0.009) <= 0.001
