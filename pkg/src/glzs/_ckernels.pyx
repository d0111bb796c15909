# cython: language_level=3
"""Compiled SU(2) step kernels.

Every row ``w[k]`` of a rotation table is a vector ``B * dt`` (rad). The step
unitary is ``exp(-i/2 sigma.w)``; rows are applied in order.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt

cnp.import_array()


cdef inline void _coeffs(double wx, double wy, double wz,
                         double *c, double *sx, double *sy, double *sz) noexcept nogil:
    cdef double b = sqrt(wx * wx + wy * wy + wz * wz)
    cdef double s
    if b == 0.0:
        c[0] = 1.0
        sx[0] = 0.0
        sy[0] = 0.0
        sz[0] = 0.0
        return
    c[0] = cos(0.5 * b)
    s = sin(0.5 * b) / b
    sx[0] = s * wx
    sy[0] = s * wy
    sz[0] = s * wz


def apply_rotations(const double[:, ::1] w, double complex p0, double complex p1):
    """Propagate the amplitudes (p0, p1) through all rows of ``w``."""
    cdef Py_ssize_t k, n = w.shape[0]
    cdef double c, sx, sy, sz
    cdef double complex q0, q1
    with nogil:
        for k in range(n):
            _coeffs(w[k, 0], w[k, 1], w[k, 2], &c, &sx, &sy, &sz)
            q0 = (c - 1j * sz) * p0 + (-sy - 1j * sx) * p1
            q1 = (sy - 1j * sx) * p0 + (c + 1j * sz) * p1
            p0 = q0
            p1 = q1
    return p0, p1


def record_rotations(const double[:, ::1] w, double complex p0, double complex p1,
                     Py_ssize_t group):
    """Like ``apply_rotations`` but return the state after every ``group`` rows."""
    cdef Py_ssize_t k, j = 0, n = w.shape[0]
    cdef Py_ssize_t m = n // group
    cdef double c, sx, sy, sz
    cdef double complex q0, q1
    out = np.empty((m, 2), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    with nogil:
        for k in range(n):
            _coeffs(w[k, 0], w[k, 1], w[k, 2], &c, &sx, &sy, &sz)
            q0 = (c - 1j * sz) * p0 + (-sy - 1j * sx) * p1
            q1 = (sy - 1j * sx) * p0 + (c + 1j * sz) * p1
            p0 = q0
            p1 = q1
            if (k + 1) % group == 0:
                o[j, 0] = p0
                o[j, 1] = p1
                j += 1
    return out


def rotation_product(const double[:, ::1] w):
    """Ordered product U_n ... U_1 of all rows as a 2x2 complex array."""
    cdef Py_ssize_t k, n = w.shape[0]
    cdef double c, sx, sy, sz
    cdef double complex a = 1.0, b = 0.0, d = 0.0, e = 1.0
    cdef double complex m00, m01, m10, m11, na, nb, nd, ne
    with nogil:
        for k in range(n):
            _coeffs(w[k, 0], w[k, 1], w[k, 2], &c, &sx, &sy, &sz)
            m00 = c - 1j * sz
            m01 = -sy - 1j * sx
            m10 = sy - 1j * sx
            m11 = c + 1j * sz
            na = m00 * a + m01 * d
            nb = m00 * b + m01 * e
            nd = m10 * a + m11 * d
            ne = m10 * b + m11 * e
            a = na
            b = nb
            d = nd
            e = ne
    out = np.empty((2, 2), dtype=np.complex128)
    out[0, 0] = a
    out[0, 1] = b
    out[1, 0] = d
    out[1, 1] = e
    return out
