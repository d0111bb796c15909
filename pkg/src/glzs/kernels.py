"""Backend selection for the SU(2) step kernels.

The compiled extension is used when it imports; otherwise the numpy version.
Set ``GLZS_BACKEND=python`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

_forced = os.environ.get("GLZS_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _pykernels
        BACKEND = "python"


def _table(w):
    return np.ascontiguousarray(w, dtype=np.float64).reshape(-1, 3)


def apply_rotations(w, psi, impl=None):
    """Apply every rotation row of ``w`` to the 2-vector ``psi``."""
    impl = impl or _impl
    p0, p1 = impl.apply_rotations(_table(w), complex(psi[0]), complex(psi[1]))
    return np.array([p0, p1], dtype=np.complex128)


def record_rotations(w, psi, group=1, impl=None):
    """States after every ``group`` rows, shape (len(w) // group, 2)."""
    impl = impl or _impl
    return np.asarray(
        impl.record_rotations(_table(w), complex(psi[0]), complex(psi[1]), int(group))
    )


def rotation_product(w, impl=None):
    """Ordered product of all rotation rows (last row leftmost)."""
    impl = impl or _impl
    return np.asarray(impl.rotation_product(_table(w)))


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
