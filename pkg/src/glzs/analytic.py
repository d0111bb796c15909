"""Closed-form Landau-Zener-Stückelberg theory and Berry-phase bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import loggamma

from .bloch import SX, Unitary2
from .schedule import EchoPulse, Schedule, asymptotic_sweep_time


class GaugeBreakdownError(RuntimeError):
    """Consecutive eigenstate overlaps lost positive real part (under-sampled path)."""


@dataclass(frozen=True)
class ImpulseParams:
    p_lz: float
    stokes_phase: float = 0.0
    xi_a: float = 0.0
    xi_b: float = 0.0
    gamma_minus: float = 0.0
    gamma_plus: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_lz <= 1.0:
            raise ValueError(f"p_lz must lie in [0, 1], got {self.p_lz}")


def lz_probability(delta_0: float, v: float) -> float:
    """Asymptotic transition probability exp(-pi delta_0^2 / (2|v|))."""
    if v == 0:
        raise ValueError("sweep rate must be non-zero")
    return math.exp(-math.pi * delta_0 ** 2 / (2.0 * abs(v)))


def adiabaticity(delta_0: float, v: float) -> float:
    """delta = delta_0^2 / (4|v|), so that P = exp(-2 pi delta)."""
    return delta_0 ** 2 / (4.0 * abs(v))


def stokes_phase(delta: float) -> float:
    """pi/4 + delta (ln delta - 1) + arg Gamma(1 - i delta)."""
    if delta < 0:
        raise ValueError("adiabaticity parameter must be non-negative")
    if delta == 0:
        return math.pi / 4.0
    return math.pi / 4.0 + delta * (math.log(delta) - 1.0) + float(np.imag(loggamma(1.0 - 1j * delta)))


def _exp_sz(xi: float) -> np.ndarray:
    return np.diag([np.exp(1j * xi), np.exp(-1j * xi)])


def transition_matrix(p_lz: float, phi_s: float) -> np.ndarray:
    """The impulse matrix N at the crossing."""
    a = math.sqrt(1.0 - p_lz) * np.exp(-1j * phi_s)
    b = math.sqrt(p_lz)
    return np.array([[a, -b], [b, np.conj(a)]], dtype=np.complex128)


def impulse_transition(p: ImpulseParams) -> Unitary2:
    """U_a N U_b with U_x = exp(i xi_x sigma_z)."""
    m = _exp_sz(p.xi_a) @ transition_matrix(p.p_lz, p.stokes_phase) @ _exp_sz(p.xi_b)
    return Unitary2.from_matrix(m)


def geometric_operator(gamma_minus: float, gamma_plus: float) -> Unitary2:
    """diag(e^{i gamma_-}, e^{i gamma_+}) in the adiabatic basis."""
    return Unitary2.from_matrix(np.diag([np.exp(1j * gamma_minus), np.exp(1j * gamma_plus)]))


def echo_operator(azimuth: float) -> np.ndarray:
    return np.array([[0.0, np.exp(-1j * azimuth)], [np.exp(1j * azimuth), 0.0]])


def berry_phase_circular(theta: float, dphi: float) -> Tuple[float, float]:
    """(gamma_-, gamma_+) for azimuthal transport by dphi at polar angle theta."""
    if not 0.0 <= theta <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    g = 0.5 * dphi * (1.0 - math.cos(theta))
    return g, -g


def glzs_state(p_lz, phi_0, xi_a=0.0, xi_b=0.0, stokes_phase=0.0, echo_azimuth=0.0,
               gammas_a=(0.0, 0.0), gammas_b=None) -> np.ndarray:
    """Final amplitudes of the impulse-model interferometer, adiabatic basis.

    The geometric stage is arm A, the echo, then arm B. Written in the frame
    that follows the inverted basis, the echo conjugates arm B, so the
    combined geometric stage is X^-1 U_G2 X U_G1 (diagonal). The second
    passage is the mirrored crossing expressed in the inverted basis,
    sigma_x (U_b N U_a) sigma_x.
    """
    if gammas_b is None:
        gammas_b = berry_phase_circular(0.5 * math.pi, phi_0)
    n = transition_matrix(p_lz, stokes_phase)
    ua, ub = _exp_sz(xi_a), _exp_sz(xi_b)
    u_lz = ua @ n @ ub
    u_mirror = SX @ (ub @ n @ ua) @ SX
    x = echo_operator(echo_azimuth)
    g1 = geometric_operator(*gammas_a).matrix
    g2 = geometric_operator(*gammas_b).matrix
    u_g = np.linalg.inv(x) @ g2 @ x @ g1
    psi_minus = np.array([1.0, 0.0], dtype=np.complex128)
    return u_mirror @ u_g @ u_lz @ psi_minus


def glzs_population(p_lz, phi_0, xi_a=0.0, xi_b=0.0, stokes_phase=0.0, echo_azimuth=0.0) -> float:
    """Upper adiabatic population after the full impulse-model sequence."""
    if not 0.0 <= p_lz <= 1.0:
        raise ValueError("p_lz must lie in [0, 1]")
    psi = glzs_state(p_lz, phi_0, xi_a, xi_b, stokes_phase, echo_azimuth)
    return float(abs(psi[1]) ** 2)


def fringe_law(p_lz, phi_0):
    return 2.0 * p_lz * (1.0 - p_lz) * (1.0 - np.cos(phi_0))


def berry_window(s: Schedule) -> Tuple[float, float]:
    """Default geometric-phase window: end of the first sweep to the end of arm B."""
    return s.stage("3a")[0], s.stage("3b")[1]


def berry_phase_between(traj, level: str, t_start: float, t_end: float) -> float:
    """Pancharatnam phase of one level accumulated between two recorded times."""
    if level in ("+", "plus", 1, +1):
        series = traj.pancharatnam_phase_plus
    elif level in ("-", "minus", -1):
        series = traj.pancharatnam_phase_minus
    else:
        raise ValueError(f"level must be '+' or '-', got {level!r}")
    i0, i1 = traj.index_at(t_start), traj.index_at(t_end)
    worst = traj.min_overlap[i0 + 1:i1 + 1]
    if worst.size and not np.all(worst > 0):
        k = i0 + 1 + int(np.argmin(worst))
        raise GaugeBreakdownError(
            f"eigenstate overlap with non-positive real part near t = {traj.times[k]:.9g} s; "
            "refine the sampling")
    return float(series[i1] - series[i0])


def berry_phase_from_trajectory(traj, level: str, window: Optional[Tuple[float, float]] = None) -> float:
    """Discrete Pancharatnam phase of ``level`` over the geometric-phase window."""
    if window is None:
        if traj.schedule is None:
            raise ValueError("trajectory carries no schedule; pass an explicit window")
        window = berry_window(traj.schedule)
    return berry_phase_between(traj, level, *window)


def relative_geometric_phase(traj, window: Optional[Tuple[float, float]] = None) -> float:
    """gamma_+ - gamma_- summed over the window, sign-flipped after each echo.

    An echo swaps the roles of the two levels, so phases on the far side enter
    with opposite sign. Positive values follow the branch that starts in the
    upper level.
    """
    s = traj.schedule
    if window is None:
        window = berry_window(s)
    t0, t1 = window
    cuts = [t for t in (s.echo_times() if s is not None else []) if t0 < t < t1]
    edges = [t0] + cuts + [t1]
    total, sign = 0.0, 1.0
    for a, b in zip(edges[:-1], edges[1:]):
        d = berry_phase_between(traj, "+", a, b) - berry_phase_between(traj, "-", a, b)
        total += sign * d
        sign = -sign
    return total


def first_passage_probability(delta_0, omega_i, T, prep_rate=None, cfg=None, errors=None):
    """Upper-level population after one numerical sweep over +/- omega_i.

    Without ``prep_rate`` the sweep starts in the exact ground state. With it,
    the state is first rotated adiabatically from |down> at that rate, as in
    the interferometer. ``errors`` applies static control errors to both.
    """
    from .bloch import DOWN, FieldPoint, adiabatic_eigenbasis
    from .evolve import apply_static_error, final_state
    from .schedule import OmegaSweep, ThetaRamp

    segs, labels = [OmegaSweep(omega_i, -omega_i, delta_0, 0.0, T)], ["2"]
    b = math.hypot(omega_i, delta_0)
    th = math.atan2(omega_i, delta_0)
    if prep_rate is not None:
        segs.insert(0, ThetaRamp(b, 0.0, th, th / prep_rate, 0.0))
        labels.insert(0, "1")
    s = Schedule(tuple(segs), tuple(labels))
    if errors is not None:
        s = apply_static_error(s, errors)
    if prep_rate is not None:
        start = DOWN.array
    else:
        f0 = s.segments[0].start()
        start = adiabatic_eigenbasis(f0).psi_minus.array
    psi = final_state(s, start, cfg)
    end = adiabatic_eigenbasis(s.segments[-1].end()).psi_plus
    return float(abs(np.vdot(end.array, psi)) ** 2)


def calibrate_sweep_time(delta_0, omega_i, target_p, refine=False, cfg=None,
                         prep_rate=None) -> float:
    """Sweep time giving transition probability ``target_p``.

    By default the asymptotic formula is inverted. With ``refine`` the time is
    adjusted so that a numerical sweep over the finite range +/- omega_i
    reaches ``target_p``; ``prep_rate`` includes the preparation rotation in
    that calibration run.
    """
    if not 0.0 < target_p < 1.0:
        raise ValueError("target_p must lie strictly between 0 and 1")
    t = asymptotic_sweep_time(delta_0, omega_i, target_p)
    if not refine:
        return t

    def f(T):
        return first_passage_probability(delta_0, omega_i, T, prep_rate, cfg) - target_p

    lo, hi = 0.7 * t, 1.3 * t
    flo, fhi = f(lo), f(hi)
    while flo * fhi > 0 and hi < 10 * t:
        lo, hi = lo * 0.8, hi * 1.25
        flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise RuntimeError("could not bracket the calibrated sweep time")
    return brentq(f, lo, hi, xtol=1e-13 * t)
