"""Study pipelines: adiabatic trace, LZ scans, fringes, and robustness maps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .analytic import calibrate_sweep_time, lz_probability
from .bloch import DOWN, FieldPoint, adiabatic_eigenbasis, bloch_vectors
from .evolve import (ErrorOffsets, IntegratorConfig, ShotResult, apply_static_error, evolve,
                     final_state, measure_up)
from .schedule import GlzsParams, build_glzs, build_sweep, build_trace
from .units import B_TRACE, DELTA_0, OMEGA_I, to_khz, to_us

CSV_DIGITS = 9
CALIBRATIONS = ("pipeline", "sweep", "asymptotic")


# ------------------------------------------------------------------------ tables


@dataclass
class Table:
    """Named numeric columns of equal length."""

    columns: List[str]
    data: Dict[str, np.ndarray]

    def __post_init__(self):
        lens = {len(np.atleast_1d(self.data[c])) for c in self.columns}
        if len(lens) > 1:
            raise ValueError("table columns differ in length")

    def __len__(self):
        return len(np.atleast_1d(self.data[self.columns[0]])) if self.columns else 0

    def __getitem__(self, name):
        return self.data[name]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v == 0.0:
        return "0"
    return format(v, f".{CSV_DIGITS}g")


def write_csv(path, table: Table, provenance: Optional[Dict[str, object]] = None) -> None:
    """UTF-8 CSV: '#' provenance lines, a header row, then 9-significant-digit values."""
    lines = []
    for k, v in (provenance or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(",".join(table.columns))
    cols = [np.atleast_1d(table.data[c]) for c in table.columns]
    for row in zip(*cols):
        lines.append(",".join(format_value(x) for x in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def trajectory_table(traj) -> Table:
    cols = ["t_us", "omega_khz", "delta_khz", "phi_rad", "p_up_bare", "p_plus_adiabatic",
            "e_minus_khz", "e_plus_khz", "berry_minus_rad", "berry_plus_rad"]
    data = {
        "t_us": to_us(traj.times), "omega_khz": to_khz(traj.omega),
        "delta_khz": to_khz(traj.delta), "phi_rad": traj.phi, "p_up_bare": traj.p_up_bare,
        "p_plus_adiabatic": traj.p_plus_adiabatic, "e_minus_khz": to_khz(traj.e_minus),
        "e_plus_khz": to_khz(traj.e_plus), "berry_minus_rad": traj.pancharatnam_phase_minus,
        "berry_plus_rad": traj.pancharatnam_phase_plus,
    }
    return Table(cols, data)


# --------------------------------------------------------------------- adiabatic


def run_adiabatic_trace(rate, b_mag=B_TRACE, shots=1500, seed=0, n_points=101,
                        cfg: Optional[IntegratorConfig] = None) -> Table:
    """Rotate the field from +z to -z at constant rate, starting in |down>.

    ``max_deviation`` in the returned table's data is computed over every
    integration step, not only the thinned output rows.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    traj = evolve(build_trace(rate, b_mag), DOWN, cfg)
    seg = traj.schedule.segments[0]
    theta = seg.theta_start + (seg.theta_end - seg.theta_start) * traj.times / seg.duration
    ideal = np.sin(0.5 * theta) ** 2
    dev = np.abs(traj.p_up_bare - ideal)
    idx = np.unique(np.round(np.linspace(0, len(traj) - 1, n_points)).astype(int))
    bv = bloch_vectors(traj.states[idx])
    sampled = [measure_up(p, shots, seed, i) for i, p in enumerate(traj.p_up_bare[idx])] \
        if shots else []
    data = {
        "t_us": to_us(traj.times[idx]), "theta_rad": theta[idx],
        "p_up_exact": traj.p_up_bare[idx], "p_up_ideal": ideal[idx],
        "n_up": np.array([r.n_up for r in sampled], dtype=int) if shots else np.zeros(idx.size, int),
        "p_hat": np.array([r.p_hat for r in sampled]) if shots else np.full(idx.size, np.nan),
        "std_err": np.array([r.std_err for r in sampled]) if shots else np.full(idx.size, np.nan),
        "bloch_x": bv[:, 0], "bloch_y": bv[:, 1], "bloch_z": bv[:, 2],
        "max_deviation": float(dev.max()),
    }
    cols = ["t_us", "theta_rad", "p_up_exact", "p_up_ideal", "n_up", "p_hat", "std_err",
            "bloch_x", "bloch_y", "bloch_z"]
    return Table(cols, data)


def adiabatic_deviation(rate, b_mag=B_TRACE, cfg=None) -> float:
    """max_t |P_up(t) - sin^2(theta(t)/2)| for the trace rotation."""
    return run_adiabatic_trace(rate, b_mag, shots=0, cfg=cfg)["max_deviation"]


# -------------------------------------------------------------------------- LZ


def _sweep_p_plus(T, delta_0, omega_i, cfg):
    s = build_sweep(omega_i, delta_0, T)
    start = adiabatic_eigenbasis(FieldPoint(omega_i, delta_0, 0.0)).psi_minus
    psi = final_state(s, start, cfg)
    end = adiabatic_eigenbasis(FieldPoint(-omega_i, delta_0, 0.0)).psi_plus
    return float(abs(np.vdot(end.array, psi)) ** 2)


def run_lz_scan(T_values, delta_0=DELTA_0, omega_i=OMEGA_I,
                cfg: Optional[IntegratorConfig] = None) -> Table:
    """Numerical upper-level population after one sweep versus the asymptotic formula.

    Each sweep starts in the exact instantaneous ground state at +omega_i.
    """
    T_values = np.asarray(T_values, dtype=float)
    if np.any(T_values <= 0):
        raise ValueError("sweep times must be positive")
    p_exact = np.array([_sweep_p_plus(T, delta_0, omega_i, cfg) for T in T_values])
    p_eq = np.array([lz_probability(delta_0, 2.0 * omega_i / T) for T in T_values])
    return Table(["T_us", "p_exact", "p_eq3"], {"T_us": to_us(T_values), "p_exact": p_exact,
                                                 "p_eq3": p_eq})


def run_lz_transient(T, n_time_samples=401, delta_0=DELTA_0, omega_i=OMEGA_I,
                     cfg: Optional[IntegratorConfig] = None) -> Table:
    """Upper adiabatic population through one sweep, sampled uniformly in time."""
    if not T > 0:
        raise ValueError("T must be positive")
    s = build_sweep(omega_i, delta_0, T)
    start = adiabatic_eigenbasis(FieldPoint(omega_i, delta_0, 0.0)).psi_minus
    traj = evolve(s, start, cfg)
    idx = np.unique(np.round(np.linspace(0, len(traj) - 1, n_time_samples)).astype(int))
    return Table(["t_us", "p_plus_adiabatic"],
                 {"t_us": to_us(traj.times[idx]), "p_plus_adiabatic": traj.p_plus_adiabatic[idx]})


# ---------------------------------------------------------------------- fringes


@dataclass(frozen=True)
class FringeFit:
    """P = offset - (contrast / 2) cos(phi0 / period_factor + phase)."""

    offset: float
    contrast: float
    period_factor: float
    phase: float
    rms: float

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.period_factor


def _linear_fit(x, y, k):
    a = np.column_stack([np.ones_like(x), np.cos(k * x), np.sin(k * x)])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = y - a @ coef
    return coef, float(np.sqrt(np.mean(res ** 2)))


def _coverage(x):
    # a uniform grid with n points covers n / (n - 1) times its extent
    n = x.size
    return np.ptp(x) * n / (n - 1)


def fit_fringe(phi0, p, period_factor: Optional[float] = 1.0, free_period: bool = True,
               search=(0.5, 2.0)) -> FringeFit:
    """Least-squares cosine fit with free offset.

    The angular frequency k = 1 / period_factor is scanned over ``search``
    (in period factors) and refined when ``free_period`` is set.
    """
    x = np.asarray(phi0, dtype=float)
    y = np.asarray(p, dtype=float)
    if x.size < 8:
        raise ValueError("need at least 8 fringe points")
    if _coverage(x) < 2.0 * math.pi * (period_factor or 1.0) * (1 - 1e-9):
        raise ValueError("fringe points must span at least one period")
    if free_period:
        ks = 1.0 / np.linspace(search[0], search[1], 301)
        errs = [_linear_fit(x, y, k)[1] for k in ks]
        j = int(np.argmin(errs))
        lo = ks[min(j + 1, ks.size - 1)]
        hi = ks[max(j - 1, 0)]
        if hi > lo:
            r = minimize_scalar(lambda k: _linear_fit(x, y, k)[1], bounds=(lo, hi),
                                method="bounded", options={"xatol": 1e-10})
            k = float(r.x)
        else:
            k = float(ks[j])
    else:
        k = 1.0 / float(period_factor)
    (m, a, b), rms = _linear_fit(x, y, k)
    return FringeFit(float(m), float(2.0 * math.hypot(a, b)), 1.0 / k,
                     float(math.atan2(b, -a)), rms)


@dataclass
class FringeScan:
    phi0_values: np.ndarray
    p_up_exact: np.ndarray
    p_up_sampled: List[ShotResult]
    fitted_contrast: float
    fitted_period: float
    fit: Optional[FringeFit] = None
    params: Optional[GlzsParams] = field(default=None, repr=False)

    @property
    def period_factor(self):
        return self.fitted_period / (2.0 * math.pi)

    def table(self) -> Table:
        n = len(self.phi0_values)
        if self.p_up_sampled:
            n_shots = np.array([r.n_shots for r in self.p_up_sampled])
            n_up = np.array([r.n_up for r in self.p_up_sampled])
            p_hat = np.array([r.p_hat for r in self.p_up_sampled])
            se = np.array([r.std_err for r in self.p_up_sampled])
        else:
            n_shots = n_up = np.zeros(n, dtype=int)
            p_hat = se = np.full(n, np.nan)
        return Table(["phi0_rad", "p_up_exact", "n_shots", "n_up", "p_hat", "std_err"],
                     {"phi0_rad": self.phi0_values, "p_up_exact": self.p_up_exact,
                      "n_shots": n_shots, "n_up": n_up, "p_hat": p_hat, "std_err": se})


def default_phi0_grid(n=64, span=4.0 * math.pi):
    return np.linspace(0.0, span, n)


def calibrated_params(params: Optional[GlzsParams] = None, calibration: str = "pipeline",
                      cfg: Optional[IntegratorConfig] = None) -> GlzsParams:
    """Fill in the sweep time so the first passage splits the population evenly.

    ``pipeline`` calibrates the numerical prep-plus-sweep, ``sweep`` the
    numerical sweep alone, ``asymptotic`` inverts the closed-form probability.
    An explicit ``lz_duration`` is left untouched.
    """
    p = params or GlzsParams()
    if p.lz_duration is not None:
        return p
    if calibration not in CALIBRATIONS:
        raise ValueError(f"unknown calibration {calibration!r}; expected one of {CALIBRATIONS}")
    if calibration == "asymptotic":
        T = calibrate_sweep_time(p.delta_0, p.omega_i, 0.5)
    elif calibration == "sweep":
        T = calibrate_sweep_time(p.delta_0, p.omega_i, 0.5, refine=True, cfg=cfg)
    else:
        T = calibrate_sweep_time(p.delta_0, p.omega_i, 0.5, refine=True, cfg=cfg,
                                 prep_rate=p.prep_rate)
    return replace(p, lz_duration=T)


def fringe_population(params: GlzsParams, phi_0: float, cfg=None,
                      errors: Optional[ErrorOffsets] = None) -> float:
    s = build_glzs(replace(params, phi_0=float(phi_0)))
    if errors is not None:
        s = apply_static_error(s, errors)
    return float(abs(final_state(s, DOWN, cfg)[0]) ** 2)


def expected_period_factor(params: GlzsParams) -> float:
    if params.phi_transport_mode == "split":
        return math.inf
    if params.hold_delta:
        return 1.0 / (1.0 - params.delta_0 / params.b_mag)
    return 1.0


def run_fringe(phi0_grid=None, shots=1500, seed=0, params: Optional[GlzsParams] = None,
               cfg: Optional[IntegratorConfig] = None, errors: Optional[ErrorOffsets] = None,
               calibration: str = "pipeline", period_guess: Optional[float] = None) -> FringeScan:
    """Final P_up versus phi_0, exact and shot-sampled, with a cosine fit."""
    phi0 = default_phi0_grid() if phi0_grid is None else np.asarray(phi0_grid, dtype=float)
    p = calibrated_params(params, calibration, cfg)
    exact = np.array([fringe_population(p, x, cfg, errors) for x in phi0])
    sampled = [measure_up(float(np.clip(v, 0, 1)), shots, seed, i) for i, v in enumerate(exact)] \
        if shots else []
    guess = period_guess or expected_period_factor(p)
    if math.isinf(guess):
        guess = 1.0
    lo, hi = 0.5 * guess, 2.0 * guess
    fit = fit_fringe(phi0, exact, guess, free_period=True, search=(lo, hi))
    return FringeScan(phi0, exact, sampled, fit.contrast, fit.period, fit, p)


def contrast(fringe: FringeScan, sampled: bool = False) -> float:
    """Peak-to-peak amplitude of the cosine fit (1 for the ideal fringe)."""
    y = np.array([r.p_hat for r in fringe.p_up_sampled]) if sampled else fringe.p_up_exact
    x = np.asarray(fringe.phi0_values)
    if x.size < 8:
        raise ValueError("need at least 8 fringe points")
    period = fringe.period_factor if math.isfinite(fringe.period_factor) else 1.0
    if _coverage(x) < 2.0 * math.pi * period * (1 - 1e-9):
        raise ValueError("fringe points must span at least one period")
    if np.ptp(y) == 0:
        return 0.0
    return fit_fringe(x, y, period, free_period=False).contrast


def amplitude_error_oracle(eps: float) -> float:
    """Impulse-model contrast 4P(1-P) with P = 0.5^(1/(1+eps))."""
    p = 0.5 ** (1.0 / (1.0 + eps))
    return 4.0 * p * (1.0 - p)


def frequency_error_oracle(ratio: float) -> float:
    """Impulse-model contrast with P = 0.5^((1+delta/delta_0)^2)."""
    p = 0.5 ** ((1.0 + ratio) ** 2)
    return 4.0 * p * (1.0 - p)


# ------------------------------------------------------------------ robustness


@dataclass
class RobustnessMap:
    amp_err: np.ndarray
    freq_err_over_delta0: np.ndarray
    contrast: np.ndarray
    mode: str
    seed: int
    sample_seeds: np.ndarray
    shape: Optional[Tuple[int, int]] = None

    def table(self) -> Table:
        return Table(["amp_err", "freq_err_over_delta0", "contrast", "seed"],
                     {"amp_err": self.amp_err, "freq_err_over_delta0": self.freq_err_over_delta0,
                      "contrast": self.contrast, "seed": self.sample_seeds})


def sample_seed(seed: int, index: int) -> int:
    """Per-sample seed derived from (seed, index); stable across platforms."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint32)[0])


def _map_point(args):
    eps, ratio, params, cfg, phi0, shots, sseed = args
    err = ErrorOffsets(eps, ratio * params.delta_0)
    exact = np.array([fringe_population(params, x, cfg, err) for x in phi0])
    if shots:
        y = np.array([measure_up(float(np.clip(v, 0, 1)), shots, sseed, j).p_hat
                      for j, v in enumerate(exact)])
    else:
        y = exact
    return fit_fringe(phi0, y, free_period=True, search=(0.5, 2.0)).contrast


def run_robustness_map(mode: str = "grid", n_samples: int = 1139,
                       ranges=((-0.5, 0.5), (-0.3, 0.3)), shots: int = 0, seed: int = 0,
                       params: Optional[GlzsParams] = None,
                       cfg: Optional[IntegratorConfig] = None, grid_shape=(41, 25),
                       phi0_points: int = 16, workers: int = 1,
                       calibration: str = "pipeline") -> RobustnessMap:
    """Fringe contrast under quasi-static amplitude and detuning errors.

    The sweep time is calibrated once for the error-free controls; each sample
    then applies its (eps, delta) to the whole schedule. Each fringe uses
    ``phi0_points`` values over one period.
    """
    (e0, e1), (r0, r1) = ranges
    if not (1.0 + e0 > 0 and 1.0 + e1 > 0):
        raise ValueError("amplitude error range must keep 1 + eps > 0")
    p = calibrated_params(params, calibration, cfg)
    if mode == "grid":
        ne, nr = grid_shape
        eg, rg = np.meshgrid(np.linspace(e0, e1, ne), np.linspace(r0, r1, nr), indexing="ij")
        eps, ratio = eg.ravel(), rg.ravel()
        shape = (ne, nr)
    elif mode == "random":
        u = np.array([np.random.Generator(np.random.Philox(key=[seed, i], counter=[0, 0, 0, 2]))
                      .random(2) for i in range(n_samples)]).reshape(-1, 2)
        eps = e0 + (e1 - e0) * u[:, 0]
        ratio = r0 + (r1 - r0) * u[:, 1]
        shape = None
    else:
        raise ValueError(f"mode must be 'grid' or 'random', got {mode!r}")
    phi0 = np.linspace(0.0, 2.0 * math.pi, phi0_points, endpoint=False)
    seeds = np.array([sample_seed(seed, i) for i in range(eps.size)], dtype=np.int64)
    jobs = [(float(a), float(b), p, cfg, phi0, shots, int(s)) for a, b, s in zip(eps, ratio, seeds)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            c = list(ex.map(_map_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        c = [_map_point(j) for j in jobs]
    return RobustnessMap(eps, ratio, np.array(c), mode, seed, seeds, shape)
