from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from pulseforge import kernels

BACKENDS = kernels.backends()


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in ("python", "compiled")


@pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernels not built")
def test_backends_agree_on_unitaries():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(200, 5, 5)) + 1j * rng.normal(size=(200, 5, 5))
    U = np.linalg.qr(A)[0]
    psi0 = rng.normal(size=5) + 1j * rng.normal(size=5)
    a = BACKENDS["python"].apply_unitaries(U, psi0)
    b = BACKENDS["compiled"].apply_unitaries(U, psi0)
    assert np.max(np.abs(a - b)) < 1e-13


@pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernels not built")
def test_backends_agree_on_crank_nicolson():
    rng = np.random.default_rng(3)
    x = np.linspace(-8, 8, 129)
    v = 0.5 * x**2 + rng.normal(scale=0.1, size=(300, 129))
    psi0 = (np.exp(-(x**2) / 2) + 0j) / np.pi**0.25
    save = np.zeros(300, bool)
    save[::50] = True
    outs = []
    for name in ("python", "compiled"):
        out = np.zeros((7, 129), complex)
        out[0] = psi0
        BACKENDS[name].cn_propagate(v, psi0, x[1] - x[0], 1e-2, 1.0, save, out)
        outs.append(out)
    assert np.max(np.abs(outs[0] - outs[1])) < 1e-13


def test_env_var_forces_python_backend():
    env = dict(os.environ, PULSEFORGE_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import pulseforge; print(pulseforge.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


def test_kernels_reject_shape_mismatch():
    for mod in BACKENDS.values():
        with pytest.raises(ValueError):
            mod.apply_unitaries(np.zeros((3, 2, 2), complex), np.zeros(3, complex))
