"""Unit conversions at the I/O boundary (kHz and us in, rad/s and s inside)."""
import math

TWO_PI = 2.0 * math.pi


def khz(f):
    """Ordinary frequency in kHz to angular frequency in rad/s."""
    return TWO_PI * (f * 1e3)


def to_khz(w):
    return w / TWO_PI / 1e3


def us(t):
    return t * 1e-6


def to_us(t):
    return t / 1e-6


# reference operating point
DELTA_0 = khz(8.68)
OMEGA_I = khz(49.24)
B_TRACE = khz(50.0)
PREP_RATE = math.pi / us(200.0)
