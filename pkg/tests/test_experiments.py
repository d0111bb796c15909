import io
import math

import numpy as np
import pytest
from scipy.signal import argrelextrema

from glzs.evolve import ShotResult
from glzs.experiments import (FringeScan, Table, adiabatic_deviation, amplitude_error_oracle,
                              calibrated_params, contrast, default_phi0_grid, expected_period_factor,
                              fit_fringe, format_value, frequency_error_oracle, run_adiabatic_trace,
                              run_fringe, run_lz_scan, run_lz_transient, run_robustness_map,
                              sample_seed, trajectory_table, write_csv)
from glzs.schedule import GlzsParams
from glzs.units import B_TRACE, DELTA_0, OMEGA_I, us

# frozen from an independent scipy DOP853 integration (rtol 1e-12) of the
# two-level Schroedinger equation
TRACE_ORACLE = {200: 0.024991, 60: 0.076763, 2000: 0.0024999}
LZ_ORACLE = {90: 0.5184321848, 157: 0.3107551007, 300: 0.1046071860}


@pytest.mark.parametrize("denom", sorted(TRACE_ORACLE))
def test_trace_deviation_matches_oracle(denom):
    assert adiabatic_deviation(math.pi / us(denom)) == pytest.approx(TRACE_ORACLE[denom],
                                                                     rel=2e-3)


def test_trace_ordering_and_scaling():
    slow = adiabatic_deviation(math.pi / us(200))
    assert adiabatic_deviation(math.pi / us(60)) > slow
    # deviation from the abrupt start scales with rate / |B|
    assert adiabatic_deviation(math.pi / us(2000)) == pytest.approx(slow / 10, rel=1e-3)


def test_trace_table_columns():
    tab = run_adiabatic_trace(math.pi / us(200), shots=1500, seed=2, n_points=51)
    assert len(tab) == 51
    assert tab["t_us"][-1] == pytest.approx(200.0)
    assert tab["p_up_exact"][-1] > 0.99
    assert np.all(tab["std_err"] <= 0.013 + 1e-12)
    r = np.sqrt(tab["bloch_x"] ** 2 + tab["bloch_y"] ** 2 + tab["bloch_z"] ** 2)
    assert np.allclose(r, 1.0)
    with pytest.raises(ValueError):
        run_adiabatic_trace(0.0)


def test_lz_scan_examples():
    tab = run_lz_scan([us(T) for T in LZ_ORACLE])
    assert tab["p_eq3"] == pytest.approx([0.507, 0.306, 0.104], abs=5e-4)
    assert tab["p_exact"] == pytest.approx(list(LZ_ORACLE.values()), abs=1e-8)


def test_lz_scan_bound_and_ripple():
    T = np.linspace(60, 400, 69)
    tab = run_lz_scan(us(T))
    assert np.abs(tab["p_exact"] - tab["p_eq3"]).max() <= 0.03
    p = tab["p_exact"]
    rise = np.maximum.accumulate(p[::-1])[::-1] - p
    assert rise.max() <= 0.015


def test_lz_scan_adiabatic_limit():
    assert run_lz_scan([2e-3])["p_exact"][0] <= 0.01
    with pytest.raises(ValueError):
        run_lz_scan([us(90), 0.0])


@pytest.mark.parametrize("T,final", [(90, 0.507), (300, 0.104)])
def test_transient_final_and_early(T, final):
    tab = run_lz_transient(us(T))
    y, t = tab["p_plus_adiabatic"], tab["t_us"]
    assert len(tab) == 401
    assert abs(y[-1] - final) <= 0.02
    assert y[t < T / 4].max() <= 0.02


@pytest.mark.parametrize("T", [90, 157, 300])
def test_transient_swings_shrink_after_crossing(T):
    tab = run_lz_transient(us(T), n_time_samples=4001)
    y, t = tab["p_plus_adiabatic"], tab["t_us"]
    v = 2 * OMEGA_I / us(T)
    t0 = T / 2 + 3 * DELTA_0 / v * 1e6
    ex = np.sort(np.concatenate([argrelextrema(y, np.greater)[0], argrelextrema(y, np.less)[0]]))
    ex = ex[t[ex] > t0]
    swings = np.abs(np.diff(y[ex]))
    assert np.all(np.diff(swings) <= 1e-9)


def test_fit_recovers_known_cosine():
    x = default_phi0_grid(64)
    y = 0.45 - 0.4 * np.cos(x / 1.2 + 0.3)
    f = fit_fringe(x, y, 1.0, search=(0.6, 2.0))
    assert (f.offset, f.contrast, f.period_factor, f.phase) == pytest.approx((0.45, 0.8, 1.2, 0.3))
    with pytest.raises(ValueError):
        fit_fringe(x[:5], y[:5])
    with pytest.raises(ValueError):
        fit_fringe(x[:16], y[:16])


def _scan(y, x=None):
    x = default_phi0_grid(64) if x is None else x
    return FringeScan(x, np.asarray(y, dtype=float), [], 0.0, 2 * math.pi)


def test_contrast_examples():
    x = default_phi0_grid(64)
    assert contrast(_scan(0.5 * (1 - np.cos(x)))) == pytest.approx(1.0)
    assert contrast(_scan(np.full(64, 0.3))) == 0.0
    assert contrast(_scan(2 * 0.3 * 0.7 * (1 - np.cos(x)))) == pytest.approx(0.84)
    with pytest.raises(ValueError):
        contrast(_scan(np.zeros(4), x[:4]))


def test_contrast_from_shots():
    x = default_phi0_grid(64)
    scan = _scan(0.5 * (1 - np.cos(x)))
    scan.p_up_sampled = [ShotResult(1500, int(round(1500 * p))) for p in scan.p_up_exact]
    assert contrast(scan, sampled=True) == pytest.approx(1.0, abs=2e-3)


def test_oracles():
    assert amplitude_error_oracle(0.0) == pytest.approx(1.0)
    assert amplitude_error_oracle(0.5) == pytest.approx(0.932, abs=5e-4)
    assert amplitude_error_oracle(-0.5) == pytest.approx(0.75)
    assert frequency_error_oracle(0.3) == pytest.approx(0.855, abs=5e-4)
    assert frequency_error_oracle(-0.3) == pytest.approx(0.82, abs=5e-3)


@pytest.fixture(scope="module")
def default_fringe():
    return run_fringe(default_phi0_grid(64), shots=1500, seed=0)


def test_fringe_matches_law(default_fringe):
    f = default_fringe
    assert np.abs(f.p_up_exact - 0.5 * (1 - np.cos(f.phi0_values))).max() <= 0.02
    assert f.period_factor == pytest.approx(1.0, abs=0.005)
    assert 0 <= f.fitted_contrast <= 1.05
    assert len(f.p_up_sampled) == len(f.phi0_values) == 64


def test_fringe_csv_is_reproducible(default_fringe):
    again = run_fringe(default_phi0_grid(64), shots=1500, seed=0)
    a, b = io.StringIO(), io.StringIO()
    write_csv(a, default_fringe.table(), {"seed": 0})
    write_csv(b, again.table(), {"seed": 0})
    assert a.getvalue() == b.getvalue()
    lines = a.getvalue().splitlines()
    assert lines[0] == "# seed=0"
    assert lines[1] == "phi0_rad,p_up_exact,n_shots,n_up,p_hat,std_err"
    assert len(lines) == 66


def test_held_detuning_stretches_period():
    p = GlzsParams(hold_delta=True)
    f = run_fringe(default_phi0_grid(64), shots=0, params=p)
    assert f.period_factor == pytest.approx(expected_period_factor(p), rel=0.02)
    assert expected_period_factor(p) == pytest.approx(1 / (1 - 0.1736), rel=1e-3)


def test_calibration_modes():
    base = GlzsParams()
    assert calibrated_params(base, "asymptotic").lz_duration == pytest.approx(us(91.798), rel=1e-5)
    pipe = calibrated_params(base)
    assert us(95) < pipe.lz_duration < us(110)
    fixed = GlzsParams(lz_duration=us(90))
    assert calibrated_params(fixed) is fixed
    with pytest.raises(ValueError):
        calibrated_params(base, "guess")


def test_map_ideal_point_and_axes():
    m = run_robustness_map(grid_shape=(3, 3))
    assert m.shape == (3, 3)
    assert m.amp_err.min() == -0.5 and m.amp_err.max() == 0.5
    assert m.freq_err_over_delta0.min() == -0.3 and m.freq_err_over_delta0.max() == 0.3
    centre = m.contrast.reshape(3, 3)[1, 1]
    assert centre == pytest.approx(1.0, abs=0.02)


def test_map_random_is_deterministic_and_order_free():
    a = run_robustness_map(mode="random", n_samples=5, shots=300, seed=11)
    b = run_robustness_map(mode="random", n_samples=5, shots=300, seed=11)
    assert np.array_equal(a.contrast, b.contrast)
    assert np.array_equal(a.sample_seeds, [sample_seed(11, i) for i in range(5)])
    assert np.all((-0.5 <= a.amp_err) & (a.amp_err <= 0.5))
    # a longer run extends the same sample sequence
    c = run_robustness_map(mode="random", n_samples=7, shots=300, seed=11)
    assert np.array_equal(c.contrast[:5], a.contrast)
    par = run_robustness_map(mode="random", n_samples=5, shots=300, seed=11, workers=2)
    assert np.array_equal(par.contrast, a.contrast)


def test_map_validation():
    with pytest.raises(ValueError):
        run_robustness_map(ranges=((-1.5, 0.5), (-0.3, 0.3)))
    with pytest.raises(ValueError):
        run_robustness_map(mode="spiral")


def test_csv_formatting(tmp_path):
    assert format_value(0.0) == "0"
    assert format_value(1 / 3) == "0.333333333"
    assert format_value(np.int64(7)) == "7"
    t = Table(["a", "b"], {"a": np.array([1.0, 2.5]), "b": np.array([3, 4])})
    path = tmp_path / "t.csv"
    write_csv(path, t, {"k": "v"})
    assert path.read_bytes() == b"# k=v\na,b\n1,3\n2.5,4\n"
    with pytest.raises(ValueError):
        Table(["a", "b"], {"a": np.zeros(2), "b": np.zeros(3)})


def test_trajectory_table_schema():
    from glzs.bloch import DOWN
    from glzs.evolve import evolve
    from glzs.schedule import build_trace
    tab = trajectory_table(evolve(build_trace(math.pi / us(200), B_TRACE), DOWN))
    assert tab.columns == ["t_us", "omega_khz", "delta_khz", "phi_rad", "p_up_bare",
                           "p_plus_adiabatic", "e_minus_khz", "e_plus_khz", "berry_minus_rad",
                           "berry_plus_rad"]
    assert tab["e_plus_khz"][0] == pytest.approx(25.0)
