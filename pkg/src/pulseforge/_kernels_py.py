"""Pure-Python/numpy versions of the propagation kernels.

Same signatures and results as the compiled ``_kernels`` module; used when the
extension is not built or when ``PULSEFORGE_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def apply_unitaries(U: np.ndarray, psi0: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=np.complex128)
    psi = np.asarray(psi0, dtype=np.complex128)
    n, m = U.shape[0], U.shape[1]
    if U.shape[2] != m or psi.shape[0] != m:
        raise ValueError("unitary and state dimensions disagree")
    out = np.empty((n + 1, m), dtype=np.complex128)
    out[0] = psi
    for k in range(n):
        out[k + 1] = U[k] @ out[k]
    return out


def cn_propagate(
    v_mid: np.ndarray,
    psi0: np.ndarray,
    dx: float,
    dt: float,
    mass: float,
    save: np.ndarray,
    out: np.ndarray,
) -> np.ndarray:
    v_mid = np.asarray(v_mid, dtype=np.float64)
    n_steps, npts = v_mid.shape
    if psi0.shape[0] != npts or save.shape[0] != n_steps:
        raise ValueError("potential, state and save-mask shapes disagree")
    kin = 1.0 / (mass * dx * dx)
    off = -0.5j * dt * (0.5 * kin)
    psi = np.array(psi0, dtype=np.complex128)
    psi[0] = psi[-1] = 0.0
    inner = slice(1, npts - 1)
    ab = np.empty((3, npts - 2), dtype=np.complex128)
    ab[0] = off
    ab[2] = off
    row = 1
    for k in range(n_steps):
        b = 1.0 + 0.5j * dt * (kin + v_mid[k, inner])
        rhs = b.conj() * psi[inner] - off * (psi[:-2] + psi[2:])
        ab[1] = b
        psi[inner] = solve_banded((1, 1), ab, rhs, check_finite=False)
        if save[k]:
            out[row] = psi
            row += 1
    return psi
