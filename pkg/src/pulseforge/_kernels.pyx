# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping loops for the forward propagators.

Both routines are drop-in replacements for the ones in ``_kernels_py``;
``pulseforge.kernels`` picks whichever is importable.
"""
import numpy as np


def apply_unitaries(const double complex[:, :, ::1] U, const double complex[::1] psi0):
    """Apply ``U[0], U[1], ...`` in sequence; returns all ``n + 1`` states."""
    cdef Py_ssize_t n = U.shape[0]
    cdef Py_ssize_t m = U.shape[1]
    cdef Py_ssize_t k, i, j
    cdef double complex acc
    if U.shape[2] != m or psi0.shape[0] != m:
        raise ValueError("unitary and state dimensions disagree")
    out_arr = np.empty((n + 1, m), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    for i in range(m):
        out[0, i] = psi0[i]
    for k in range(n):
        for i in range(m):
            acc = 0
            for j in range(m):
                acc = acc + U[k, i, j] * out[k, j]
            out[k + 1, i] = acc
    return out_arr


def cn_propagate(
    const double[:, ::1] v_mid,
    const double complex[::1] psi0,
    double dx,
    double dt,
    double mass,
    const unsigned char[::1] save,
    double complex[:, ::1] out,
):
    """Crank-Nicolson sweep with Dirichlet walls at the first and last node.

    ``v_mid[k]`` is the potential at the midpoint of step ``k``. The state after
    step ``k`` is written to the next free row of ``out`` when ``save[k]`` is
    set; row 0 must already hold the initial state.
    """
    cdef Py_ssize_t n_steps = v_mid.shape[0]
    cdef Py_ssize_t npts = psi0.shape[0]
    cdef Py_ssize_t k, j, row = 1
    cdef Py_ssize_t lo = 1, hi = npts - 2
    cdef double kin = 1.0 / (mass * dx * dx)
    cdef double complex off = -0.5j * dt * (0.5 * kin)
    cdef double complex b, denom
    if v_mid.shape[1] != npts or save.shape[0] != n_steps:
        raise ValueError("potential, state and save-mask shapes disagree")
    psi_arr = np.array(psi0, dtype=np.complex128)
    cp_arr = np.empty(npts, dtype=np.complex128)
    dp_arr = np.empty(npts, dtype=np.complex128)
    rhs_arr = np.empty(npts, dtype=np.complex128)
    cdef double complex[::1] psi = psi_arr
    cdef double complex[::1] cp = cp_arr
    cdef double complex[::1] dp = dp_arr
    cdef double complex[::1] rhs = rhs_arr
    psi[0] = 0
    psi[npts - 1] = 0
    for k in range(n_steps):
        for j in range(lo, hi + 1):
            b = 1.0 + 0.5j * dt * (kin + v_mid[k, j])
            rhs[j] = b.conjugate() * psi[j] - off * (psi[j - 1] + psi[j + 1])
        b = 1.0 + 0.5j * dt * (kin + v_mid[k, lo])
        cp[lo] = off / b
        dp[lo] = rhs[lo] / b
        for j in range(lo + 1, hi + 1):
            b = 1.0 + 0.5j * dt * (kin + v_mid[k, j])
            denom = b - off * cp[j - 1]
            cp[j] = off / denom
            dp[j] = (rhs[j] - off * dp[j - 1]) / denom
        psi[hi] = dp[hi]
        for j in range(hi - 1, lo - 1, -1):
            psi[j] = dp[j] - cp[j] * psi[j + 1]
        if save[k]:
            for j in range(npts):
                out[row, j] = psi[j]
            row += 1
    return psi_arr
