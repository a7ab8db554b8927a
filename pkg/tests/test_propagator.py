from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal

from pulseforge.chain_control import ChainSpec, lattice_bohm_potential
from pulseforge.core import GridWavefunction1D, ObservableTrajectory, SpatialGrid, TimeGrid
from pulseforge.errors import InputError
from pulseforge.propagator import (
    LatticeHamiltonianSignal,
    Thresholds,
    chain_hamiltonian,
    fidelity,
    ground_state_lattice,
    propagate_grid_1d,
    propagate_lattice,
    verify_reconstruction,
)
from pulseforge.spin_control import KET_LEFT, KET_RIGHT

UP = np.array([1.0, 0.0], complex)
DOWN = np.array([0.0, 1.0], complex)


def _two_site(T12: complex, grid: TimeGrid) -> LatticeHamiltonianSignal:
    H = np.zeros((len(grid), 2, 2), complex)
    H[:, 0, 1] = T12
    H[:, 1, 0] = np.conj(T12)
    return LatticeHamiltonianSignal.from_hoppings(grid, H)


def test_two_site_rabi_closed_form():
    g = TimeGrid(0.0, 3.0, 300)
    traj = propagate_lattice(_two_site(1.0, g), UP)
    t = g.times
    # H = -[[0,1],[1,0]] in the hopping sign convention
    exact = np.stack([np.cos(t), 1j * np.sin(t)], axis=1)
    assert np.max(np.abs(traj.states - exact)) < 1e-10


def test_zero_hamiltonian_is_identity():
    g = TimeGrid(0.0, 1.0, 50)
    psi0 = np.array([0.6, 0.8j, 0.0])
    sig = LatticeHamiltonianSignal.from_hoppings(g, np.zeros((51, 3, 3), complex))
    traj = propagate_lattice(sig, psi0)
    assert np.all(traj.states == psi0)


def test_not_gate_pulse_flips_left_to_right(not_gate):
    p = not_gate.pulse
    sig = LatticeHamiltonianSignal.from_field(p.grid, p.bx, p.by, p.field_at)
    final = propagate_lattice(sig, KET_LEFT, stride=p.grid.n_steps).final
    assert fidelity(KET_RIGHT, final) >= 1 - 1e-6


def _discrete_ground_state(sp: SpatialGrid, V: np.ndarray) -> GridWavefunction1D:
    # ground state of the same three-point Hamiltonian the propagator uses
    kin = 1.0 / sp.dx**2
    inner = V[1:-1]
    _, vec = eigh_tridiagonal(kin + inner, np.full(inner.size - 1, -0.5 * kin), select="i", select_range=(0, 0))
    amp = np.zeros(sp.n_points, complex)
    amp[1:-1] = vec[:, 0]
    return GridWavefunction1D.normalized(sp, amp)


def test_harmonic_ground_state_is_stationary():
    sp = SpatialGrid(-10.0, 10.0, 512)
    psi0 = _discrete_ground_state(sp, 0.5 * sp.x**2)
    g = TimeGrid(0.0, 20 * np.pi, 3000)  # ten periods
    traj = propagate_grid_1d(lambda x, t: 0.5 * x**2 + 0 * t, psi0, grid=g, stride=100)
    assert np.max(np.abs(traj.densities - traj.densities[0])) < 1e-8
    assert np.max(np.abs(traj.norms() - 1.0)) < 1e-10


def test_free_gaussian_spreads_as_closed_form():
    # the error is set by the second-order stencil, so dx must be small
    sp = SpatialGrid(-20.0, 20.0, 4001)
    s0 = 1.0
    amp = np.exp(-(sp.x**2) / (4 * s0**2))
    psi0 = GridWavefunction1D.normalized(sp, amp)
    g = TimeGrid.from_dt(0.0, 2.0, 1e-3)
    traj = propagate_grid_1d(lambda x, t: 0 * x + 0 * t, psi0, grid=g, stride=500)
    var = sp.integrate(traj.densities * sp.x**2)
    exact = s0**2 + (traj.times / (2 * s0)) ** 2
    assert np.max(np.abs(var - exact)) < 1e-4
    assert np.max(np.abs(traj.norms() - 1.0)) < 1e-10


def test_chain_ground_state_eigenformula():
    E, psi = ground_state_lattice(chain_hamiltonian(1.0, np.zeros(11)))
    assert E == pytest.approx(-2 * np.cos(np.pi / 12), abs=1e-12)
    ref = np.sin(np.pi * np.arange(1, 12) / 12)
    assert fidelity(psi, ref) == pytest.approx(1.0, abs=1e-12)


def test_spin_ground_state_along_x_field():
    # H = -B0 Sx with Sx = sigma_x / 2
    H = -0.5 * np.array([[0, 1], [1, 0]], complex)
    _, psi = ground_state_lattice(H)
    assert fidelity(psi, (UP + DOWN) / np.sqrt(2)) == pytest.approx(1.0, abs=1e-14)


def test_uniform_bohm_potential_ground_state():
    spec = ChainSpec(11, 1.0)
    v = lattice_bohm_potential(np.full(11, 1 / 11), spec)
    _, psi = ground_state_lattice(chain_hamiltonian(1.0, v))
    assert np.max(np.abs(np.abs(psi) ** 2 - 1 / 11)) < 1e-8


def test_fidelity_examples():
    a = np.array([0.3, 0.4j, np.sqrt(0.75)])
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-15)
    assert fidelity(UP, DOWN) == 0.0
    assert fidelity(KET_LEFT, UP) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(InputError):
        fidelity(UP, a)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.1, 10.0))
def test_fidelity_is_a_ray_overlap(seed, scale):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=4) + 1j * rng.normal(size=4)
    b = rng.normal(size=4) + 1j * rng.normal(size=4)
    f = fidelity(a, b)
    assert 0.0 <= f <= 1.0
    assert fidelity(scale * np.exp(1j * seed) * a, b) == pytest.approx(f, rel=1e-12, abs=1e-15)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_lattice_propagation_preserves_norm(seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(0.0, 2.0, 400)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    w = rng.uniform(0.5, 3.0)
    H = (A + A.conj().T)[None] * np.cos(w * g.times)[:, None, None]
    psi0 = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi0 /= np.linalg.norm(psi0)
    traj = propagate_lattice(LatticeHamiltonianSignal.from_hoppings(g, H), psi0)
    assert np.max(np.abs(np.linalg.norm(traj.states, axis=1) - 1.0)) < 1e-12


def test_signal_rejects_non_hermitian():
    g = TimeGrid(0.0, 1.0, 10)
    H = np.zeros((11, 2, 2), complex)
    H[:, 0, 1] = 1.0
    with pytest.raises(InputError):
        LatticeHamiltonianSignal.from_hoppings(g, H)


def test_verify_rejects_mismatched_grid():
    g = TimeGrid(0.0, 1.0, 10)
    sig = _two_site(1.0, g)
    target = ObservableTrajectory(TimeGrid(0.0, 1.0, 20), "site-densities", np.full((21, 2), 0.5))
    with pytest.raises(InputError):
        verify_reconstruction(sig, target, KET_LEFT)


def test_verify_flags_wrong_target():
    g = TimeGrid(0.0, 1.0, 100)
    sig = _two_site(1.0, g)
    target = ObservableTrajectory(g, "site-densities", np.tile([1.0, 0.0], (101, 1)))
    rep = verify_reconstruction(sig, target, UP, Thresholds(max_density_error=1e-6))
    assert not rep.passed
    assert rep.checks["density"] is False and rep.checks["norm"] is True
