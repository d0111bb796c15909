"""Piecewise control programs (Omega(t), Delta(t), phi(t)).

A :class:`Schedule` is an immutable list of typed segments. Every timed segment
evaluates its own field in local time; zero-duration segments mark either a
state-side operation (:class:`EchoPulse`) or a declared phase discontinuity
(:class:`PhiJump`).
"""
from __future__ import annotations

import bisect
import functools
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .bloch import FieldPoint, field_components
from .units import DELTA_0, OMEGA_I, PREP_RATE, us

WAVEFORM_BUDGET = 10_000_000
CONTINUITY_RTOL = 1e-9

TRANSPORT_MODES = ("ramp-after-echo", "ramp-before-echo", "jump-after-echo", "split")


class ScheduleError(ValueError):
    """Invalid segment or schedule; ``segment`` is the offending index if known."""

    def __init__(self, message, segment=None):
        super().__init__(message if segment is None else f"segment {segment}: {message}")
        self.message = message
        self.segment = segment


def _check_finite(obj, names):
    for name in names:
        v = getattr(obj, name)
        if not math.isfinite(v):
            raise ScheduleError(f"{type(obj).__name__}.{name} must be finite, got {v}")


def _check_duration(obj, allow_zero=False):
    if obj.duration < 0 or (obj.duration == 0 and not allow_zero):
        raise ScheduleError(f"{type(obj).__name__} needs a positive duration, got {obj.duration}")


class _Timed:
    """Mixin for segments with a duration and a field profile."""

    zero_duration = False

    def cartesian(self, tau):
        om, de, ph = self.fields(tau)
        return om * np.cos(ph), om * np.sin(ph), de

    def point(self, tau) -> FieldPoint:
        om, de, ph = self.fields(np.array([float(tau)]))
        return FieldPoint(float(om[0]), float(de[0]), float(ph[0]))

    def start(self) -> FieldPoint:
        return self.point(0.0)

    def end(self) -> FieldPoint:
        return self.point(self.duration)

    def _frac(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.duration == 0:
            return np.zeros_like(tau)
        return tau / self.duration


@dataclass(frozen=True)
class ThetaRamp(_Timed):
    """Field of fixed magnitude whose polar angle moves linearly in time.

    Omega = scale * |B| sin(theta), Delta = |B| cos(theta) + offset. The scale
    and offset are 1 and 0 unless a static error has been applied.
    """

    b_mag: float
    theta_start: float
    theta_end: float
    duration: float
    phi: float = 0.0
    omega_scale: float = 1.0
    delta_offset: float = 0.0

    def __post_init__(self):
        _check_finite(self, ("b_mag", "theta_start", "theta_end", "duration", "phi",
                             "omega_scale", "delta_offset"))
        _check_duration(self, allow_zero=self.theta_start == self.theta_end)

    def fields(self, tau):
        th = self.theta_start + (self.theta_end - self.theta_start) * self._frac(tau)
        om = self.omega_scale * self.b_mag * np.sin(th)
        de = self.b_mag * np.cos(th) + self.delta_offset
        return om, de, np.full_like(th, self.phi)

    def with_error(self, eps, dd):
        return replace(self, omega_scale=self.omega_scale * (1.0 + eps),
                       delta_offset=self.delta_offset + dd)

    @property
    def rate(self):
        return abs(self.theta_end - self.theta_start) / self.duration if self.duration else 0.0


@dataclass(frozen=True)
class OmegaSweep(_Timed):
    omega_start: float
    omega_end: float
    delta: float
    phi: float
    duration: float

    def __post_init__(self):
        _check_finite(self, ("omega_start", "omega_end", "delta", "phi", "duration"))
        _check_duration(self)

    def fields(self, tau):
        x = self._frac(tau)
        om = self.omega_start + (self.omega_end - self.omega_start) * x
        return om, np.full_like(x, self.delta), np.full_like(x, self.phi)

    def with_error(self, eps, dd):
        s = 1.0 + eps
        return replace(self, omega_start=self.omega_start * s, omega_end=self.omega_end * s,
                       delta=self.delta + dd)

    @property
    def sweep_rate(self):
        return (self.omega_end - self.omega_start) / self.duration


@dataclass(frozen=True)
class DeltaRamp(_Timed):
    omega: float
    delta_start: float
    delta_end: float
    phi: float
    duration: float

    def __post_init__(self):
        _check_finite(self, ("omega", "delta_start", "delta_end", "phi", "duration"))
        _check_duration(self)

    def fields(self, tau):
        x = self._frac(tau)
        de = self.delta_start + (self.delta_end - self.delta_start) * x
        return np.full_like(x, self.omega), de, np.full_like(x, self.phi)

    def with_error(self, eps, dd):
        return replace(self, omega=self.omega * (1.0 + eps), delta_start=self.delta_start + dd,
                       delta_end=self.delta_end + dd)


@dataclass(frozen=True)
class PhiRamp(_Timed):
    omega: float
    delta: float
    phi_start: float
    phi_end: float
    duration: float

    def __post_init__(self):
        _check_finite(self, ("omega", "delta", "phi_start", "phi_end", "duration"))
        _check_duration(self)

    def fields(self, tau):
        x = self._frac(tau)
        ph = self.phi_start + (self.phi_end - self.phi_start) * x
        return np.full_like(x, self.omega), np.full_like(x, self.delta), ph

    def with_error(self, eps, dd):
        return replace(self, omega=self.omega * (1.0 + eps), delta=self.delta + dd)


@dataclass(frozen=True)
class Hold(_Timed):
    field: FieldPoint
    duration: float

    def __post_init__(self):
        _check_finite(self, ("duration",))
        _check_duration(self)

    def fields(self, tau):
        x = np.asarray(tau, dtype=float)
        f = self.field
        return np.full_like(x, f.omega), np.full_like(x, f.delta), np.full_like(x, f.phi)

    def with_error(self, eps, dd):
        f = self.field
        return replace(self, field=FieldPoint(f.omega * (1.0 + eps), f.delta + dd, f.phi))


@dataclass(frozen=True)
class EchoPulse:
    """Instantaneous swap of the adiabatic amplitudes at the current field.

    In the (psi_minus, psi_plus) basis the operator is [[0, e^{-ia}], [e^{ia}, 0]]
    with a = axis_azimuth.
    """

    axis_azimuth: float = 0.0
    duration = 0.0
    zero_duration = True

    def __post_init__(self):
        _check_finite(self, ("axis_azimuth",))

    def with_error(self, eps, dd):
        return self


@dataclass(frozen=True)
class PhiJump:
    """Declared instantaneous change of the drive phase to ``phi_new``."""

    phi_new: float
    duration = 0.0
    zero_duration = True

    def __post_init__(self):
        _check_finite(self, ("phi_new",))

    def with_error(self, eps, dd):
        return self


SEGMENT_TYPES = (ThetaRamp, OmegaSweep, DeltaRamp, PhiRamp, Hold, EchoPulse, PhiJump)


def is_timed(seg) -> bool:
    return not getattr(seg, "zero_duration", False) and seg.duration > 0


@dataclass(frozen=True)
class Schedule:
    segments: Tuple = ()
    labels: Tuple[str, ...] = ()
    boundaries: Tuple[float, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        labels = tuple(self.labels) if self.labels else ("",) * len(segs)
        if len(labels) != len(segs):
            raise ScheduleError("labels and segments differ in length")
        for i, s in enumerate(segs):
            if not isinstance(s, SEGMENT_TYPES):
                raise ScheduleError(f"unknown segment type {type(s).__name__}", i)
        t = [0.0]
        for s in segs:
            t.append(t[-1] + s.duration)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "boundaries", tuple(t))

    def __len__(self):
        return len(self.segments)

    @property
    def duration(self) -> float:
        return self.boundaries[-1]

    def stage(self, label: str) -> Tuple[float, float]:
        """(start, end) time covered by segments carrying ``label``."""
        idx = [i for i, lab in enumerate(self.labels) if lab == label]
        if not idx:
            raise KeyError(f"no segments labeled {label!r}")
        return self.boundaries[idx[0]], self.boundaries[idx[-1] + 1]

    def echo_times(self) -> List[float]:
        return [self.boundaries[i] for i, s in enumerate(self.segments) if isinstance(s, EchoPulse)]

    def isclose(self, other: "Schedule", rtol=1e-11, atol=1e-12) -> bool:
        """Segment-by-segment equality up to text-rendering precision."""
        if len(self) != len(other) or self.labels != other.labels:
            return False
        for a, b in zip(self.segments, other.segments):
            if type(a) is not type(b):
                return False
            if not np.allclose(_numbers(a), _numbers(b), rtol=rtol, atol=atol):
                return False
        return True


def _numbers(seg):
    out = []
    for name in seg.__dataclass_fields__:
        v = getattr(seg, name)
        if isinstance(v, FieldPoint):
            out += [v.omega, v.delta, v.phi]
        else:
            out.append(float(v))
    return np.array(out)


# --------------------------------------------------------------------- builders


def build_adiabatic_rotation(b_mag, theta_start, theta_end, rate, phi=0.0) -> ThetaRamp:
    if not rate > 0:
        raise ScheduleError(f"rotation rate must be positive, got {rate}")
    return ThetaRamp(b_mag, theta_start, theta_end, abs(theta_end - theta_start) / rate, phi)


def build_lz_sweep(omega_i, delta_0, T, phi=0.0) -> OmegaSweep:
    if not T > 0:
        raise ScheduleError(f"sweep time must be positive, got {T}")
    return OmegaSweep(omega_i, -omega_i, delta_0, phi, T)


def asymptotic_sweep_time(delta_0, omega_i, target_p=0.5):
    # inverse of P = exp(-pi delta_0^2 T / (4 omega_i))
    return -4.0 * omega_i * math.log(target_p) / (math.pi * delta_0 ** 2)


@dataclass(frozen=True)
class GlzsParams:
    """Parameters of the geometric LZS interferometer schedule.

    ``lz_duration=None`` selects the sweep time for which the asymptotic LZ
    formula gives P = 1/2. ``arm_field=None`` keeps |B| = omega_i in the arms.

    With ``larmor_sync`` every constant-rate ramp inside the arms is stretched
    or shortened to a whole number of Larmor periods, so the non-adiabatic
    kicks at its start and end cancel to first order.
    """

    omega_i: float = OMEGA_I
    delta_0: float = DELTA_0
    phi_0: float = 0.0
    prep_rate: float = PREP_RATE
    lz_duration: Optional[float] = None
    delta_ramp_duration: float = us(40.0)
    arm_hold_duration: float = us(400.0)
    echo_azimuth: float = 0.0
    phi_transport_mode: str = "ramp-after-echo"
    hold_delta: bool = False
    loop_rate: float = math.pi / us(1000.0)
    arm_field: Optional[float] = None
    field_ramp_duration: float = us(20.0)
    echo_guard: float = us(5.0)
    larmor_sync: bool = True

    def __post_init__(self):
        if not (self.omega_i > 0 and self.delta_0 > 0):
            raise ScheduleError("omega_i and delta_0 must be positive")
        for name in ("prep_rate", "delta_ramp_duration", "arm_hold_duration", "loop_rate",
                     "field_ramp_duration"):
            if not getattr(self, name) > 0:
                raise ScheduleError(f"{name} must be positive")
        if self.lz_duration is not None and not self.lz_duration > 0:
            raise ScheduleError("lz_duration must be positive")
        if self.echo_guard < 0:
            raise ScheduleError("echo_guard must be non-negative")
        if self.phi_transport_mode not in TRANSPORT_MODES:
            raise ScheduleError(f"unknown phi_transport_mode {self.phi_transport_mode!r}; "
                                f"expected one of {', '.join(TRANSPORT_MODES)}")
        if self.arm_field is not None:
            if not self.arm_field > 0:
                raise ScheduleError("arm_field must be positive")
            if self.hold_delta:
                raise ScheduleError("arm_field is only supported with the detuning ramped to zero")
        for name in ("phi_0", "echo_azimuth"):
            if not math.isfinite(getattr(self, name)):
                raise ScheduleError(f"{name} must be finite")

    @property
    def b_mag(self):
        return math.hypot(self.omega_i, self.delta_0)

    @property
    def theta_i(self):
        return math.atan2(self.omega_i, self.delta_0)

    def sweep_time(self):
        if self.lz_duration is not None:
            return self.lz_duration
        return asymptotic_sweep_time(self.delta_0, self.omega_i, 0.5)


def _whole_periods(duration, phase_rate, minimum=1):
    """Duration rounded to a whole number of 2 pi phase windings."""
    period = 2.0 * math.pi / phase_rate
    return max(minimum, round(duration / period)) * period


def _delta_ramp_duration(omega, delta_0, duration):
    # mean |B| along a linear detuning ramp at fixed omega
    w, d = abs(omega), delta_0
    mean = 0.5 * (d * math.hypot(w, d) + w * w * math.asinh(d / w)) / d
    return _whole_periods(duration, mean)


def build_glzs(p: GlzsParams) -> Schedule:
    """Full interferometer: prep, sweep, two echo-separated arms, sweep back, unprep."""
    segs, labels = [], []

    def add(label, *ss):
        for s in ss:
            segs.append(s)
            labels.append(label)

    T = p.sweep_time()
    wi, d0 = p.omega_i, p.delta_0
    t_prep = p.theta_i / p.prep_rate
    add("1", ThetaRamp(p.b_mag, 0.0, p.theta_i, t_prep, 0.0))
    add("2", OmegaSweep(wi, -wi, d0, 0.0, T))

    if p.hold_delta:
        b, dl, bl, thl = wi, d0, p.b_mag, p.theta_i
    else:
        b = p.arm_field if p.arm_field is not None else wi
        dl, bl, thl = 0.0, b, 0.5 * math.pi
    h = p.arm_hold_duration
    tu = thl / p.loop_rate
    dr = p.delta_ramp_duration
    if p.larmor_sync:
        larmor = math.hypot(b, dl)
        h = 2.0 * _whole_periods(0.5 * h, larmor)
        tu = _whole_periods(tu, larmor)
        dr = _delta_ramp_duration(wi, d0, dr)

    def loop(dphi):
        # transport around the axis, then close the loop through the pole
        return [PhiRamp(-b, dl, 0.0, dphi, h),
                ThetaRamp(bl, thl, 0.0, tu, math.pi + dphi),
                ThetaRamp(bl, 0.0, thl, tu, math.pi)]

    def retrace(dphi):
        # same |B| and rotation-rate profile as loop(), enclosing no area
        return [ThetaRamp(bl, thl, 0.0, tu, math.pi),
                ThetaRamp(bl, 0.0, thl, tu, math.pi),
                PhiRamp(-b, dl, 0.0, 0.5 * dphi, 0.5 * h),
                PhiRamp(-b, dl, 0.5 * dphi, 0.0, 0.5 * h)]

    def jump(dphi):
        return [PhiJump(dphi),
                Hold(FieldPoint(-b, dl, dphi), h),
                ThetaRamp(bl, thl, 0.0, tu, math.pi + dphi),
                ThetaRamp(bl, 0.0, thl, tu, math.pi)]

    phi0 = p.phi_0
    mode = p.phi_transport_mode
    if mode == "ramp-after-echo":
        arm_a, arm_b = retrace(phi0), loop(phi0)
    elif mode == "ramp-before-echo":
        arm_a, arm_b = loop(phi0), retrace(phi0)
    elif mode == "jump-after-echo":
        arm_a, arm_b = retrace(0.0), jump(phi0)
    else:
        arm_a, arm_b = loop(0.5 * phi0), loop(0.5 * phi0)

    field_ramp = not p.hold_delta and b != wi
    if not p.hold_delta:
        add("3a", DeltaRamp(-wi, d0, 0.0, 0.0, dr))
    if field_ramp:
        add("3a", OmegaSweep(-wi, -b, 0.0, 0.0, p.field_ramp_duration))
    add("3a", *arm_a)
    guard = FieldPoint(-b, dl, 0.0)
    if p.echo_guard > 0:
        add("S1", Hold(guard, p.echo_guard))
    add("S1", EchoPulse(p.echo_azimuth))
    if p.echo_guard > 0:
        add("S2", Hold(guard, p.echo_guard))
    add("3b", *arm_b)
    if field_ramp:
        add("3b", OmegaSweep(-b, -wi, 0.0, 0.0, p.field_ramp_duration))
    if not p.hold_delta:
        add("3b", DeltaRamp(-wi, 0.0, d0, 0.0, dr))
    add("4", OmegaSweep(-wi, wi, d0, 0.0, T))
    add("5", ThetaRamp(p.b_mag, p.theta_i, 0.0, t_prep, 0.0))
    return Schedule(tuple(segs), tuple(labels))


def build_trace(rate, b_mag, theta_end=math.pi, phi=0.0) -> Schedule:
    """Single adiabatic rotation from the north pole, as used for the prep study."""
    return Schedule((build_adiabatic_rotation(b_mag, 0.0, theta_end, rate, phi),), ("1",))


def build_sweep(omega_i, delta_0, T, phi=0.0) -> Schedule:
    return Schedule((build_lz_sweep(omega_i, delta_0, T, phi),), ("2",))


# ------------------------------------------------------------------- evaluation


def _segment_index(s: Schedule, t: float) -> Tuple[int, float]:
    if not 0.0 <= t <= s.duration:
        raise ValueError(f"t = {t!r} outside [0, {s.duration!r}]")
    b = s.boundaries
    k = bisect.bisect_right(b, t) - 1
    k = min(k, len(s.segments) - 1)
    while k > 0 and not is_timed(s.segments[k]):
        k -= 1
    if not is_timed(s.segments[k]):
        raise ScheduleError("schedule has no timed segment")
    return k, t - b[k]


def field_at(s: Schedule, t: float) -> FieldPoint:
    """Field at time t. At a boundary the following segment wins."""
    k, tau = _segment_index(s, t)
    seg = s.segments[k]
    return seg.point(min(tau, seg.duration))


def sample_fields(s: Schedule, times) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized field_at over an array of times (right-limit convention)."""
    times = np.asarray(times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > s.duration):
        raise ValueError("sample times outside the schedule")
    b = np.asarray(s.boundaries)
    timed = np.array([is_timed(x) for x in s.segments])
    # map every boundary slot to the last timed segment starting at or before it
    owner = np.empty(len(s.segments), dtype=int)
    last = -1
    for i, ok in enumerate(timed):
        if ok:
            last = i
        owner[i] = last
    first_timed = int(np.argmax(timed))
    owner[owner < 0] = first_timed
    k = np.clip(np.searchsorted(b, times, side="right") - 1, 0, len(s.segments) - 1)
    k = owner[k]
    om = np.empty_like(times)
    de = np.empty_like(times)
    ph = np.empty_like(times)
    for idx in np.unique(k):
        sel = k == idx
        seg = s.segments[idx]
        tau = np.minimum(times[sel] - b[idx], seg.duration)
        om[sel], de[sel], ph[sel] = seg.fields(tau)
    return om, de, ph


@dataclass
class Waveform:
    t: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return self.t.shape[0]


def _sample_times(duration, rate):
    n = int(math.floor(duration * rate * (1 + 1e-12)))
    return n


def iter_waveform(s: Schedule, rate: float, chunk: int = 1_000_000) -> Iterator[Waveform]:
    """Stream left-endpoint samples t_k = k / rate, plus the final boundary."""
    if not rate > 0:
        raise ValueError("sample rate must be positive")
    n = _sample_times(s.duration, rate)
    for start in range(0, n + 1, chunk):
        k = np.arange(start, min(start + chunk, n + 1), dtype=float)
        t = np.minimum(k / rate, s.duration)
        yield Waveform(t, *sample_fields(s, t))
    if n / rate < s.duration * (1 - 1e-12):
        t = np.array([s.duration])
        yield Waveform(t, *sample_fields(s, t))


def sample_waveform(s: Schedule, rate: float, stream: bool = False, chunk: int = 1_000_000):
    """Uniformly sampled (Omega, Delta, phi).

    Returns a :class:`Waveform`, or an iterator of chunks when ``stream`` is set.
    Non-streaming output is limited to WAVEFORM_BUDGET samples.
    """
    if stream:
        return iter_waveform(s, rate, chunk)
    if not rate > 0:
        raise ValueError("sample rate must be positive")
    n = _sample_times(s.duration, rate) + 2
    if n > WAVEFORM_BUDGET:
        raise MemoryError(f"{n} samples exceed the in-memory budget of {WAVEFORM_BUDGET}; "
                          "use stream=True")
    parts = list(iter_waveform(s, rate, chunk=max(n, 1)))
    return Waveform(*(np.concatenate([getattr(p, a) for p in parts])
                      for a in ("t", "omega", "delta", "phi")))


# ------------------------------------------------------------------- diagnostics


@functools.lru_cache(maxsize=4096)
def segment_extrema(seg, n_samples: int = 257) -> Tuple[float, float]:
    """Estimated (max |B|, max |dn/dt|) over a timed segment by dense sampling."""
    tau = np.linspace(0.0, seg.duration, n_samples)
    bx, by, bz = (np.asarray(x, dtype=float) for x in seg.cartesian(tau))
    bx, by, bz = np.broadcast_arrays(bx, by, bz)
    mag = np.sqrt(bx * bx + by * by + bz * bz)
    bmax = float(mag.max())
    good = mag > 0
    if good.sum() < 2 or seg.duration == 0:
        return bmax, 0.0
    n = np.column_stack([bx, by, bz])[good] / mag[good, None]
    tg = tau[good]
    cosang = np.clip(np.einsum("ij,ij->i", n[1:], n[:-1]), -1.0, 1.0)
    ang = np.arccos(cosang)
    rate = ang / np.diff(tg)
    rot = float(rate.max()) if rate.size else 0.0
    if not np.all(good):
        rot = math.inf
    return bmax, rot


@dataclass(frozen=True)
class ContinuityIssue:
    boundary: int
    before: int
    after: int
    mismatch: float

    def __str__(self):
        return (f"field discontinuity at boundary {self.boundary} between segment {self.before} "
                f"and segment {self.after}: |dB| = {self.mismatch:.6g} rad/s")


@dataclass
class Diagnostics:
    continuity: List[ContinuityIssue]
    adiabaticity: List[Tuple[int, str, str, float]]
    arm_symmetry: Optional[dict]
    warnings: List[str]

    @property
    def ok(self) -> bool:
        return not self.continuity

    def report(self) -> str:
        lines = []
        lines += [str(c) for c in self.continuity]
        for i, lab, kind, fig in self.adiabaticity:
            lines.append(f"segment {i} [{lab}] {kind}: adiabaticity max|dn/dt|/|B| = {fig:.4g}")
        if self.arm_symmetry:
            a = self.arm_symmetry
            lines.append(f"arms: duration A = {a['duration_a']:.9g} s, B = {a['duration_b']:.9g} s, "
                         f"max mirrored |B| mismatch = {a['max_mirror_mismatch']:.3g} rad/s")
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


ADIABATIC_WARN = 0.1


def validate(s: Schedule) -> Diagnostics:
    """Continuity, adiabaticity figures, and arm symmetry. Never raises."""
    issues, adiab, warns = [], [], []
    prev_end, prev_idx, pending_jump = None, None, None
    for i, seg in enumerate(s.segments):
        if isinstance(seg, PhiJump):
            pending_jump = seg
            continue
        if isinstance(seg, EchoPulse) or not is_timed(seg):
            continue
        start = seg.start()
        if prev_end is not None:
            ref = prev_end
            if pending_jump is not None:
                ref = FieldPoint(prev_end.omega, prev_end.delta, pending_jump.phi_new)
            a = np.array(field_components(ref))
            c = np.array(field_components(start))
            scale = max(np.linalg.norm(a), np.linalg.norm(c), 1.0)
            mis = float(np.linalg.norm(a - c))
            if mis > CONTINUITY_RTOL * scale:
                issues.append(ContinuityIssue(i, prev_idx, i, mis))
        bmax, rot = segment_extrema(seg)
        fig = rot / bmax if bmax > 0 else math.inf
        adiab.append((i, s.labels[i], type(seg).__name__, fig))
        if fig > ADIABATIC_WARN and not isinstance(seg, OmegaSweep):
            warns.append(f"segment {i} [{s.labels[i]}] adiabaticity figure {fig:.3g} "
                         f"exceeds {ADIABATIC_WARN}")
        prev_end, prev_idx, pending_jump = seg.end(), i, None
    return Diagnostics(issues, adiab, arm_symmetry(s), warns)


def arm_symmetry(s: Schedule, n: int = 513) -> Optional[dict]:
    """Compare |B(t)| in arm A with |B| at the mirrored time in arm B."""
    try:
        t3 = s.stage("3a")[0]
        t7 = s.stage("3b")[1]
    except KeyError:
        return None
    echoes = s.echo_times()
    if len(echoes) != 1:
        return None
    te = echoes[0]
    da, db = te - t3, t7 - te
    x = np.linspace(0.0, 1.0, n)
    bxa, bya, bza = _cart(s, t3 + x * da)
    bxb, byb, bzb = _cart(s, t7 - x * db)
    ma = np.sqrt(bxa ** 2 + bya ** 2 + bza ** 2)
    mb = np.sqrt(bxb ** 2 + byb ** 2 + bzb ** 2)
    return {"duration_a": da, "duration_b": db,
            "max_mirror_mismatch": float(np.abs(ma - mb).max())}


def _cart(s, times):
    om, de, ph = sample_fields(s, np.clip(times, 0.0, s.duration))
    return om * np.cos(ph), om * np.sin(ph), de


def parse_schedule(text: str, variables: Optional[dict] = None) -> Schedule:
    from .dsl import parse_schedule as _parse
    return _parse(text, variables)


def render(s: Schedule) -> str:
    from .dsl import render as _render
    return _render(s)
