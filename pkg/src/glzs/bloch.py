"""Spin-1/2 algebra in an effective field.

Conventions used throughout the package:

* basis index 0 is |up>, index 1 is |down>, and sigma_z|up> = +|up>;
* H = 1/2 sigma.B with B = (Omega cos(phi), Omega sin(phi), Delta), hbar = 1;
* all frequencies are angular (rad/s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

TWO_PI = 2.0 * math.pi

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
ID2 = np.eye(2, dtype=np.complex128)

NORM_TOL = 1e-9


class DegenerateFieldError(ValueError):
    """Raised when an eigenbasis is requested for a zero field."""


@dataclass(frozen=True)
class FieldPoint:
    """Control triple at one instant: drive amplitude, detuning, drive phase."""

    omega: float
    delta: float
    phi: float = 0.0

    def __post_init__(self):
        for name in ("omega", "delta", "phi"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"FieldPoint.{name} must be finite, got {v}")
            object.__setattr__(self, name, v)

    @property
    def magnitude(self) -> float:
        return math.hypot(self.omega, self.delta)

    def components(self) -> Tuple[float, float, float]:
        return field_components(self)


def field_components(f: FieldPoint) -> Tuple[float, float, float]:
    """Cartesian field (Bx, By, Bz) in rad/s."""
    return (f.omega * math.cos(f.phi), f.omega * math.sin(f.phi), f.delta)


def canonicalize(f: FieldPoint) -> FieldPoint:
    """Representative with omega >= 0 and phi in [0, 2pi).

    (omega < 0, phi) and (|omega|, phi + pi) map to the same point. A zero
    drive has no meaningful phase, so phi is set to 0 there.
    """
    omega, phi = f.omega, f.phi
    if omega == 0.0:
        return FieldPoint(0.0, f.delta, 0.0)
    if omega < 0.0:
        omega, phi = -omega, phi + math.pi
    phi = math.fmod(phi, TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    if phi >= TWO_PI:
        phi = 0.0
    return FieldPoint(omega, f.delta, phi)


@dataclass(frozen=True)
class StateVector:
    amp_up: complex
    amp_down: complex

    def __post_init__(self):
        a, b = complex(self.amp_up), complex(self.amp_down)
        n = abs(a) ** 2 + abs(b) ** 2
        if abs(n - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized: |psi|^2 = {n!r}")
        object.__setattr__(self, "amp_up", a)
        object.__setattr__(self, "amp_down", b)

    @classmethod
    def from_array(cls, v) -> "StateVector":
        v = np.asarray(v, dtype=np.complex128).reshape(2)
        return cls(complex(v[0]), complex(v[1]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.amp_up, self.amp_down], dtype=np.complex128)

    @property
    def p_up(self) -> float:
        return abs(self.amp_up) ** 2

    def overlap(self, other: "StateVector") -> complex:
        """<self|other>."""
        return self.amp_up.conjugate() * other.amp_up + self.amp_down.conjugate() * other.amp_down

    def orthogonal(self) -> "StateVector":
        return StateVector(-self.amp_down.conjugate(), self.amp_up.conjugate())


UP = StateVector(1.0, 0.0)
DOWN = StateVector(0.0, 1.0)


@dataclass(frozen=True)
class Unitary2:
    """2x2 unitary, entries row-major."""

    u00: complex
    u01: complex
    u10: complex
    u11: complex

    def __post_init__(self):
        for name in ("u00", "u01", "u10", "u11"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        m = self.matrix
        err = np.abs(m.conj().T @ m - ID2).max()
        if err > NORM_TOL:
            raise ValueError(f"matrix is not unitary (max |U^dag U - I| = {err:.3g})")

    @classmethod
    def from_matrix(cls, m) -> "Unitary2":
        m = np.asarray(m, dtype=np.complex128).reshape(2, 2)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def identity(cls) -> "Unitary2":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.u00, self.u01], [self.u10, self.u11]], dtype=np.complex128)

    def det(self) -> complex:
        return self.u00 * self.u11 - self.u01 * self.u10

    def dagger(self) -> "Unitary2":
        return Unitary2(self.u00.conjugate(), self.u10.conjugate(),
                        self.u01.conjugate(), self.u11.conjugate())

    def __matmul__(self, other):
        if isinstance(other, Unitary2):
            return Unitary2.from_matrix(self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            return StateVector.from_array(self.matrix @ other.array)
        return NotImplemented


@dataclass(frozen=True)
class EigenPair:
    psi_minus: StateVector
    psi_plus: StateVector
    e_minus: float
    e_plus: float


def step_propagator(f: FieldPoint, dt: float) -> Unitary2:
    """exp(-i H dt) for the field held constant over dt."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return Unitary2.from_matrix(rotation_matrix(field_components(f), dt))


def rotation_matrix(b, dt: float) -> np.ndarray:
    """cos(|B|dt/2) I - i sin(|B|dt/2) sigma.n for a Cartesian field b."""
    bx, by, bz = (float(x) for x in b)
    mag = math.sqrt(bx * bx + by * by + bz * bz)
    if mag == 0.0 or dt == 0.0:
        return ID2.copy()
    c = math.cos(0.5 * mag * dt)
    s = math.sin(0.5 * mag * dt) / mag
    return np.array(
        [[c - 1j * s * bz, -1j * s * (bx - 1j * by)],
         [-1j * s * (bx + 1j * by), c + 1j * s * bz]],
        dtype=np.complex128,
    )


def eigenbasis_arrays(bx, by, bz):
    """Vectorized gauge-fixed eigenvectors for Cartesian field arrays.

    Returns (psi_minus, psi_plus, b_mag) with the vectors stacked as (n, 2).
    psi_plus has a real non-negative up amplitude and psi_minus a real
    non-negative down amplitude; on the -z axis the roles fall back to the
    other component.
    """
    bx, by, bz = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (bx, by, bz)))
    bx, by, bz = (np.atleast_1d(x) for x in (bx, by, bz))
    bperp2 = bx * bx + by * by
    mag = np.sqrt(bperp2 + bz * bz)
    if np.any(mag == 0.0):
        raise DegenerateFieldError("eigenbasis undefined for |B| = 0")
    # |B| +/- Bz without cancellation near the poles
    with np.errstate(divide="ignore", invalid="ignore"):
        plus = np.where(bz >= 0, mag + bz, bperp2 / (mag - bz))
        minus = np.where(bz >= 0, bperp2 / (mag + bz), mag - bz)
    c = np.sqrt(plus / (2.0 * mag))
    s = np.sqrt(minus / (2.0 * mag))
    bperp = np.sqrt(bperp2)
    safe = np.where(bperp > 0, bperp, 1.0)
    phase = np.where(bperp > 0, (bx + 1j * by) / safe, 1.0 + 0j)
    n = mag.shape[0]
    pm = np.empty((n, 2), dtype=np.complex128)
    pp = np.empty((n, 2), dtype=np.complex128)
    pp[:, 0] = c
    pp[:, 1] = phase * s
    pm[:, 0] = -np.conj(phase) * s
    pm[:, 1] = c
    south = (bperp == 0) & (bz < 0)
    if np.any(south):
        pm[south] = (1.0, 0.0)
        pp[south] = (0.0, 1.0)
    return pm, pp, mag


def adiabatic_eigenbasis(f: FieldPoint) -> EigenPair:
    pm, pp, mag = eigenbasis_arrays(*field_components(f))
    half = 0.5 * float(mag[0])
    return EigenPair(StateVector.from_array(pm[0]), StateVector.from_array(pp[0]), -half, half)


def adiabatic_populations(s: StateVector, f: FieldPoint) -> Tuple[float, float]:
    """(p_minus, p_plus) of state s in the eigenbasis of field f."""
    pair = adiabatic_eigenbasis(f)
    p_minus = abs(pair.psi_minus.overlap(s)) ** 2
    p_plus = abs(pair.psi_plus.overlap(s)) ** 2
    return p_minus, p_plus


def bloch_vector(s: StateVector) -> Tuple[float, float, float]:
    a, b = s.amp_up, s.amp_down
    cross = a.conjugate() * b
    return (2.0 * cross.real, 2.0 * cross.imag, abs(a) ** 2 - abs(b) ** 2)


def bloch_vectors(states) -> np.ndarray:
    """Bloch vectors for a (n, 2) amplitude array."""
    states = np.asarray(states)
    cross = np.conj(states[:, 0]) * states[:, 1]
    z = np.abs(states[:, 0]) ** 2 - np.abs(states[:, 1]) ** 2
    return np.column_stack([2.0 * cross.real, 2.0 * cross.imag, z])
