"""Pure numpy implementation of the step kernels.

Same contract as the compiled module. Products are formed by a pairwise tree
reduction and recorded states by a Hillis-Steele prefix scan, so the work is
vectorized instead of looping in Python.
"""
import numpy as np


def rotation_matrices(w):
    """Stack of step unitaries exp(-i/2 sigma.w_k), shape (n, 2, 2)."""
    w = np.asarray(w, dtype=float).reshape(-1, 3)
    b = np.sqrt(np.einsum("ij,ij->i", w, w))
    c = np.cos(0.5 * b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(b > 0.0, np.sin(0.5 * b) / np.where(b > 0.0, b, 1.0), 0.0)
    sx, sy, sz = (s * w[:, 0], s * w[:, 1], s * w[:, 2])
    m = np.empty((w.shape[0], 2, 2), dtype=np.complex128)
    m[:, 0, 0] = c - 1j * sz
    m[:, 0, 1] = -sy - 1j * sx
    m[:, 1, 0] = sy - 1j * sx
    m[:, 1, 1] = c + 1j * sz
    return m


def _tree_product(m):
    # ordered product m[n-1] @ ... @ m[0]
    if m.shape[0] == 0:
        return np.eye(2, dtype=np.complex128)
    while m.shape[0] > 1:
        if m.shape[0] % 2:
            last = m[-1:]
            m = np.concatenate([m[1:-1:2] @ m[0:-1:2], last])
        else:
            m = m[1::2] @ m[0::2]
    return m[0].copy()


def rotation_product(w):
    return _tree_product(rotation_matrices(w))


def apply_rotations(w, p0, p1):
    u = rotation_product(w)
    return (u[0, 0] * p0 + u[0, 1] * p1, u[1, 0] * p0 + u[1, 1] * p1)


def record_rotations(w, p0, p1, group):
    m = rotation_matrices(w)
    n = m.shape[0]
    p = m.copy()
    shift = 1
    while shift < n:
        p[shift:] = p[shift:] @ p[:-shift]
        shift *= 2
    p = p[group - 1::group]
    psi = np.array([p0, p1], dtype=np.complex128)
    return np.ascontiguousarray(p @ psi)
