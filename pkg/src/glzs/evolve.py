"""Time evolution through a schedule, static errors, and measurement emulation."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .bloch import (DegenerateFieldError, FieldPoint, StateVector, eigenbasis_arrays,
                    field_components)
from .schedule import EchoPulse, PhiJump, Schedule, field_at, is_timed, segment_extrema

METHODS = ("cf4", "midpoint")

# fourth-order commutator-free Magnus: two exponentials at the Gauss nodes
_SQ3 = math.sqrt(3.0)
_C1, _C2 = 0.5 - _SQ3 / 6.0, 0.5 + _SQ3 / 6.0
_A1, _A2 = (3.0 - 2.0 * _SQ3) / 12.0, (3.0 + 2.0 * _SQ3) / 12.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Step-size control.

    The step in each segment is the smallest of max_phase_per_step / max|B|,
    max_field_rotation_per_step / max|dn/dt| and duration / min_steps_per_segment.
    ``record_stride`` thins recorded samples; segment ends are always kept.
    ``subdivide`` multiplies every segment's step count, so a run with
    subdivide=2 and record_stride=2 samples exactly the same times.
    """

    max_phase_per_step: float = 0.05
    max_field_rotation_per_step: float = 0.01
    min_steps_per_segment: int = 64
    record_stride: int = 1
    method: str = "cf4"
    subdivide: int = 1

    def __post_init__(self):
        if not (self.max_phase_per_step > 0 and self.max_field_rotation_per_step > 0):
            raise ValueError("step tolerances must be positive")
        if min(self.min_steps_per_segment, self.record_stride, self.subdivide) < 1:
            raise ValueError("min_steps_per_segment, record_stride and subdivide must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}; expected one of {METHODS}")

    def refined(self, factor: float = 2.0) -> "IntegratorConfig":
        return IntegratorConfig(self.max_phase_per_step / factor,
                                self.max_field_rotation_per_step / factor,
                                self.min_steps_per_segment, self.record_stride, self.method,
                                self.subdivide)

    def halved(self) -> "IntegratorConfig":
        """Same grid with every step split in two; samples stay aligned."""
        return replace(self, subdivide=2 * self.subdivide, record_stride=2 * self.record_stride)


def segment_steps(seg, cfg: IntegratorConfig) -> int:
    bmax, rot = segment_extrema(seg)
    d = seg.duration
    n = cfg.min_steps_per_segment
    if bmax > 0:
        n = max(n, math.ceil(d * bmax / cfg.max_phase_per_step))
    if rot > 0 and math.isfinite(rot):
        n = max(n, math.ceil(d * rot / cfg.max_field_rotation_per_step))
    return int(n) * cfg.subdivide


def rotation_table(seg, n: int, method: str = "cf4"):
    """Rotation vectors B*dt for all exponentials of an n-step segment."""
    dt = seg.duration / n
    t0 = np.arange(n) * dt
    if method == "midpoint":
        b = np.column_stack(np.broadcast_arrays(*seg.cartesian(t0 + 0.5 * dt)))
        return b * dt, 1
    b1 = np.column_stack(np.broadcast_arrays(*seg.cartesian(t0 + _C1 * dt)))
    b2 = np.column_stack(np.broadcast_arrays(*seg.cartesian(t0 + _C2 * dt)))
    w = np.empty((2 * n, 3))
    w[0::2] = (_A2 * b1 + _A1 * b2) * dt
    w[1::2] = (_A1 * b1 + _A2 * b2) * dt
    return w, 2


@functools.lru_cache(maxsize=65536)
def segment_unitary(seg, cfg: IntegratorConfig) -> np.ndarray:
    """Propagator of one timed segment; cached because schedules share segments."""
    w, _ = rotation_table(seg, segment_steps(seg, cfg), cfg.method)
    u = kernels.rotation_product(w)
    u.setflags(write=False)
    return u


def echo_unitary(f: FieldPoint, azimuth: float) -> np.ndarray:
    """Adiabatic-basis swap at field f, written in the bare basis."""
    pm, pp, _ = eigenbasis_arrays(*field_components(f))
    v = np.column_stack([pm[0], pp[0]])
    x = np.array([[0.0, np.exp(-1j * azimuth)], [np.exp(1j * azimuth), 0.0]])
    return v @ x @ v.conj().T


def _as_array(initial) -> np.ndarray:
    if isinstance(initial, StateVector):
        return initial.array
    psi = np.asarray(initial, dtype=np.complex128).reshape(2)
    return psi


def schedule_unitary(s: Schedule, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    cfg = cfg or IntegratorConfig()
    u = np.eye(2, dtype=np.complex128)
    for i, seg in enumerate(s.segments):
        if isinstance(seg, EchoPulse):
            u = echo_unitary(field_at(s, s.boundaries[i]), seg.axis_azimuth) @ u
        elif is_timed(seg):
            u = segment_unitary(seg, cfg) @ u
    return u


def final_state(s: Schedule, initial, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Final amplitudes only, using the cached per-segment propagators."""
    cfg = cfg or IntegratorConfig()
    psi = _as_array(initial)
    for i, seg in enumerate(s.segments):
        if isinstance(seg, EchoPulse):
            psi = echo_unitary(field_at(s, s.boundaries[i]), seg.axis_azimuth) @ psi
        elif is_timed(seg):
            psi = segment_unitary(seg, cfg) @ psi
    return psi


@dataclass
class Trajectory:
    """Time-sampled record of one evolution.

    Pancharatnam phases are running sums of -arg<psi(t_k)|psi(t_k+1)> over all
    integration steps; ``min_overlap`` holds the smallest real part of those
    overlaps since the previous sample, so gauge breakdown can be detected
    after thinning.
    """

    times: np.ndarray
    states: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    phi: np.ndarray
    p_up_bare: np.ndarray
    p_plus_adiabatic: np.ndarray
    e_minus: np.ndarray
    e_plus: np.ndarray
    pancharatnam_phase_minus: np.ndarray
    pancharatnam_phase_plus: np.ndarray
    min_overlap: np.ndarray
    segment: np.ndarray
    schedule: Optional[Schedule] = field(default=None, repr=False)

    def __len__(self):
        return self.times.shape[0]

    @property
    def p_down_bare(self):
        return np.abs(self.states[:, 1]) ** 2

    @property
    def energies(self):
        return np.column_stack([self.e_minus, self.e_plus])

    def state(self, i: int) -> StateVector:
        return StateVector.from_array(self.states[i])

    def index_at(self, t: float, tol: float = 1e-12) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)) + 1e-15:
            raise KeyError(f"time {t!r} is not a recorded sample")
        return i

    def norm_drift(self) -> float:
        return float(np.abs(np.sum(np.abs(self.states) ** 2, axis=1) - 1.0).max())


def evolve(s: Schedule, initial, cfg: Optional[IntegratorConfig] = None,
           track_adiabatic: bool = True) -> Trajectory:
    """Integrate the schedule and record the trajectory."""
    cfg = cfg or IntegratorConfig()
    psi = _as_array(initial)
    cols = {k: [] for k in ("t", "psi", "om", "de", "ph", "gm", "gp", "mo", "seg")}
    gm = gp = 0.0
    prev_pm = prev_pp = None

    def eig(om, de, ph, t0):
        bx, by, bz = om * np.cos(ph), om * np.sin(ph), de
        try:
            return eigenbasis_arrays(bx, by, bz)
        except DegenerateFieldError:
            if track_adiabatic:
                raise DegenerateFieldError(
                    f"|B| = 0 within the segment starting at t = {t0:.9g} s; "
                    "adiabatic tracking is undefined there") from None
            n = np.size(om)
            nan = np.full((n, 2), np.nan + 0j)
            return nan, nan, np.sqrt(bx * bx + by * by + bz * bz)

    for i, seg in enumerate(s.segments):
        t0 = s.boundaries[i]
        if isinstance(seg, EchoPulse):
            psi = echo_unitary(field_at(s, t0), seg.axis_azimuth) @ psi
            if cols["psi"]:
                cols["psi"][-1][-1] = psi
            continue
        if not is_timed(seg):
            continue
        n = segment_steps(seg, cfg)
        w, group = rotation_table(seg, n, cfg.method)
        rec = kernels.record_rotations(w, psi, group)
        k = np.arange(n + 1)
        tau = seg.duration * k / n
        tau[-1] = seg.duration
        om, de, ph = (np.broadcast_to(x, tau.shape).astype(float) for x in seg.fields(tau))
        pm, pp, _ = eig(om, de, ph, t0)
        if prev_pm is None:
            prev_pm, prev_pp = pm[:1], pp[:1]
        ovm = np.sum(np.conj(np.vstack([prev_pm, pm[:-1]])) * pm, axis=1)
        ovp = np.sum(np.conj(np.vstack([prev_pp, pp[:-1]])) * pp, axis=1)
        dgm = -np.angle(ovm)
        dgp = -np.angle(ovp)
        mo = np.minimum(ovm.real, ovp.real)
        cgm = gm + np.cumsum(dgm)
        cgp = gp + np.cumsum(dgp)
        states = np.vstack([psi[None, :], rec])
        keep = np.unique(np.concatenate([k[:: cfg.record_stride], [n]]))
        if cols["t"]:
            # boundary 0 was recorded as the previous segment's end
            keep = keep[keep > 0]
        # index 0 of the overlap arrays is the junction with the previous segment
        idx_mo = np.minimum.reduceat(mo, np.concatenate([[0], keep[:-1] + 1]))
        cols["t"].append(t0 + tau[keep])
        cols["psi"].append(states[keep])
        cols["om"].append(om[keep])
        cols["de"].append(de[keep])
        cols["ph"].append(ph[keep])
        cols["gm"].append(cgm[keep])
        cols["gp"].append(cgp[keep])
        cols["mo"].append(idx_mo)
        cols["seg"].append(np.full(keep.size, i))
        psi = rec[-1]
        gm, gp = float(cgm[-1]), float(cgp[-1])
        prev_pm, prev_pp = pm[-1:], pp[-1:]

    if not cols["t"]:
        raise ValueError("schedule has no timed segments")
    t = np.concatenate(cols["t"])
    t[-1] = s.duration
    states = np.vstack(cols["psi"])
    om, de, ph = (np.concatenate(cols[c]) for c in ("om", "de", "ph"))
    pm, pp, mag = eig(om, de, ph, 0.0)
    p_plus = np.abs(np.sum(np.conj(pp) * states, axis=1)) ** 2
    return Trajectory(
        times=t, states=states, omega=om, delta=de, phi=ph,
        p_up_bare=np.abs(states[:, 0]) ** 2, p_plus_adiabatic=p_plus,
        e_minus=-0.5 * mag, e_plus=0.5 * mag,
        pancharatnam_phase_minus=np.concatenate(cols["gm"]),
        pancharatnam_phase_plus=np.concatenate(cols["gp"]),
        min_overlap=np.concatenate(cols["mo"]), segment=np.concatenate(cols["seg"]),
        schedule=s,
    )


# ------------------------------------------------------------------ static errors


@dataclass(frozen=True)
class ErrorOffsets:
    """Quasi-static control errors: Omega -> (1 + eps) Omega, Delta -> Delta + delta."""

    amp_scale_err: float = 0.0
    freq_offset: float = 0.0

    def __post_init__(self):
        if not 1.0 + self.amp_scale_err > 0:
            raise ValueError(f"amplitude error {self.amp_scale_err} would flip the drive sign")


def apply_static_error(s: Schedule, e: ErrorOffsets) -> Schedule:
    if not 1.0 + e.amp_scale_err > 0:
        raise ValueError(f"amplitude error {e.amp_scale_err} would flip the drive sign")
    if e.amp_scale_err == 0 and e.freq_offset == 0:
        return s
    segs = tuple(seg.with_error(e.amp_scale_err, e.freq_offset) for seg in s.segments)
    return Schedule(segs, s.labels)


# -------------------------------------------------------------------- measurement

_MEASURE_DOMAIN = 0
_PREP_DOMAIN = 1


def _raw_draws(seed: int, stream: int, n: int, domain: int) -> np.ndarray:
    # Philox is counter-based: the key selects an independent stream, the
    # counter's top word separates uses within the package
    key = np.array([int(seed) % 2 ** 64, int(stream) % 2 ** 64], dtype=np.uint64)
    counter = np.array([0, 0, 0, domain], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=counter)
    return bg.random_raw(n)


def _threshold(p: float) -> np.uint64:
    # exact since scaling by a power of two is exact in binary floating point
    return np.uint64(int(math.ldexp(p, 64)))


@dataclass(frozen=True)
class ShotResult:
    n_shots: int
    n_up: int

    def __post_init__(self):
        if not 0 <= self.n_up <= self.n_shots or self.n_shots < 1:
            raise ValueError("need 0 <= n_up <= n_shots and n_shots >= 1")

    @property
    def p_hat(self) -> float:
        return self.n_up / self.n_shots

    @property
    def std_err(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.n_shots)


def measure_up(p_true: float, n_shots: int, seed: int, stream: int = 0) -> ShotResult:
    """Binomial projective readout; ``stream`` is the experiment-point index."""
    if not 0.0 <= p_true <= 1.0:
        if -1e-12 <= p_true <= 1 + 1e-12:
            p_true = min(max(p_true, 0.0), 1.0)
        else:
            raise ValueError(f"probability out of range: {p_true}")
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    if p_true >= 1.0:
        return ShotResult(n_shots, n_shots)
    raw = _raw_draws(seed, stream, n_shots, _MEASURE_DOMAIN)
    return ShotResult(n_shots, int(np.count_nonzero(raw < _threshold(p_true))))


def prep_flips(fidelity: float, n_shots: int, seed: int, stream: int = 0) -> np.ndarray:
    """Per-shot preparation failures (True = orthogonal state prepared)."""
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    if fidelity <= 0.0:
        return np.ones(n_shots, dtype=bool)
    raw = _raw_draws(seed, stream, n_shots, _PREP_DOMAIN)
    return raw < _threshold(1.0 - fidelity)


def prep_error(initial: StateVector, fidelity: float, seed: int, shot: int = 0) -> StateVector:
    """The prepared state for one shot: ``initial`` or, on failure, its orthogonal."""
    if fidelity >= 1.0:
        if fidelity > 1.0:
            raise ValueError("fidelity must lie in [0, 1]")
        return initial
    flip = bool(prep_flips(fidelity, 1, seed, shot)[0])
    return initial.orthogonal() if flip else initial
