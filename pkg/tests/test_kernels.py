import numpy as np
import pytest

from glzs import kernels
from glzs.bloch import rotation_matrix

BACKENDS = kernels.available_backends()


def reference_product(w):
    u = np.eye(2, dtype=complex)
    for row in w:
        u = rotation_matrix(row, 1.0) @ u
    return u


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


@pytest.fixture
def table(rng):
    return rng.normal(scale=0.3, size=(257, 3))


def test_backend_flag_is_known():
    assert kernels.BACKEND in BACKENDS


def test_rotation_product_matches_reference(impl, table):
    assert np.allclose(kernels.rotation_product(table, impl=impl), reference_product(table),
                       atol=1e-12)


def test_apply_rotations_matches_product(impl, table):
    psi = np.array([0.6, 0.8j])
    out = kernels.apply_rotations(table, psi, impl=impl)
    assert np.allclose(out, reference_product(table) @ psi, atol=1e-12)


@pytest.mark.parametrize("group", [1, 2, 3])
def test_record_rotations_states(impl, table, group):
    w = table[: 3 * 80]
    psi = np.array([1.0, 0.0], dtype=complex)
    rec = kernels.record_rotations(w, psi, group, impl=impl)
    assert rec.shape == (len(w) // group, 2)
    for k in (0, 17, len(rec) - 1):
        expect = reference_product(w[: (k + 1) * group]) @ psi
        assert np.allclose(rec[k], expect, atol=1e-12)


def test_backends_agree(table):
    psi = np.array([0.0, 1.0], dtype=complex)
    outs = [kernels.record_rotations(table, psi, 1, impl=b) for b in BACKENDS.values()]
    for o in outs[1:]:
        assert np.abs(o - outs[0]).max() < 1e-13


def test_empty_table(impl):
    assert np.allclose(kernels.rotation_product(np.zeros((0, 3)), impl=impl), np.eye(2))


def test_environment_forces_python_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, GLZS_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import glzs; print(glzs.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
