from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulseforge.chain_control import kinetic_from_density, link_current_from_density
from pulseforge.core import LatticeWavefunction, TimeGrid
from pulseforge.errors import InputError, RepresentabilityError, VanishingDensityError
from pulseforge.lattice_map import (
    ComplexCurrent,
    check_representability,
    observable_from_state,
    reconstruct_hopping,
)
from pulseforge.propagator import LatticeHamiltonianSignal, propagate_lattice
from pulseforge.scenarios import random_smooth_hoppings
from pulseforge.spin_control import KET_LEFT, bloch_state


def _T2(value: complex) -> np.ndarray:
    return np.array([[0, value], [np.conj(value), 0]], complex)


def test_real_state_real_hopping_carries_no_current():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 5))
    T = A + A.T
    np.fill_diagonal(T, 0.0)
    psi = LatticeWavefunction.normalized(rng.uniform(0.2, 1.0, 5))
    assert np.all(observable_from_state(T, psi).imag == 0.0)


def test_empty_site_kills_link():
    Q = observable_from_state(_T2(1.0), np.array([1.0, 0.0]))
    assert Q[0, 1] == 0.0


def test_two_site_pure_current():
    Q = observable_from_state(_T2(1.0), np.array([1, 1j]) / np.sqrt(2))
    assert Q[0, 1] == pytest.approx(1j, abs=1e-15)


def test_observable_is_hermitian():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    T = A + A.conj().T
    np.fill_diagonal(T, 0.0)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    Q = observable_from_state(T, psi / np.linalg.norm(psi))
    np.testing.assert_allclose(Q, Q.conj().T, atol=1e-15)


def test_zero_observable_means_no_drive():
    g = TimeGrid(0.0, 1.0, 100)
    psi0 = LatticeWavefunction.normalized([0.5, 1j, -0.3, 0.7])
    rec = reconstruct_hopping(ComplexCurrent(g, np.zeros((101, 4, 4), complex)), psi0)
    assert np.all(rec.hoppings.values == 0.0)
    # states are rebuilt from moduli and phases, so allow rounding
    assert np.max(np.abs(rec.states - psi0.amplitudes)) < 1e-15


def _round_trip(seed: int, M: int = 4, n_steps: int = 10_000) -> float:
    g = TimeGrid(0.0, 1.0, n_steps)
    hoppings, psi0 = random_smooth_hoppings(M, seed)
    T = hoppings(g.times)
    fwd = propagate_lattice(LatticeHamiltonianSignal.from_hoppings(g, T, hoppings), psi0)
    rec = reconstruct_hopping(ComplexCurrent(g, observable_from_state(T, fwd.states)), psi0)
    return float(np.max(np.abs(rec.hoppings.values - T)) / np.max(np.abs(T)))


def test_round_trip_recovers_hoppings():
    assert _round_trip(11) <= 1e-6


def test_round_trip_through_near_node():
    # site 2 dips to n ~ 1e-7, where the phase rate spikes over a few steps
    assert _round_trip(5742) <= 1e-6


def test_round_trip_error_is_fourth_order():
    coarse, fine = _round_trip(5, n_steps=250), _round_trip(5, n_steps=500)
    assert 3.2 < np.log2(coarse / fine) < 4.8


def test_spin_current_reconstructs_complex_field(not_gate):
    grid = not_gate.pulse.grid
    tr = not_gate.trajectory
    gamma = np.asarray(not_gate.program.gamma(grid.times))
    # spin complex observable: (sin theta / 2) (gamma + i theta_dot)
    q = 0.5 * np.sin(tr.theta) * (gamma + 1j * tr.theta_dot)
    Q = np.zeros((len(grid), 2, 2), complex)
    Q[:, 0, 1] = q
    Q[:, 1, 0] = np.conj(q)
    rec = reconstruct_hopping(ComplexCurrent(grid, Q), LatticeWavefunction(KET_LEFT))
    field = not_gate.pulse.complex_field
    assert np.max(np.abs(rec.hoppings.values[:, 0, 1] - field)) < 1e-8
    states = bloch_state(tr.theta, tr.phi, not_gate.beta)
    assert np.max(np.abs(rec.states - states)) < 1e-6


def test_reconstruct_rejects_nodal_initial_state():
    g = TimeGrid(0.0, 1.0, 10)
    with pytest.raises(VanishingDensityError):
        reconstruct_hopping(ComplexCurrent(g, np.zeros((11, 2, 2), complex)), LatticeWavefunction(np.array([1.0, 0.0])))


def test_reconstruct_rejects_non_hermitian_observable():
    g = TimeGrid(0.0, 1.0, 10)
    Q = np.zeros((11, 2, 2), complex)
    Q[:, 0, 1] = 0.1
    with pytest.raises(InputError):
        ComplexCurrent(g, Q)


def test_zero_observable_is_representable():
    g = TimeGrid(0.0, 1.0, 10)
    n = np.full((11, 3), 1 / 3)
    assert check_representability(ComplexCurrent(g, np.zeros((11, 3, 3), complex)), n, 1.0)


def test_bound_violation_is_flagged():
    g = TimeGrid(0.0, 1.0, 4)
    Q = np.zeros((5, 2, 2), complex)
    Q[:, 0, 1] = Q[:, 1, 0] = 1.01
    report = check_representability(ComplexCurrent(g, Q), np.full((5, 2), 0.5), 1.0)
    assert not report.representable
    assert {(i, j) for i, j, _, _ in report.violations} == {(0, 1)}
    with pytest.raises(RepresentabilityError) as err:
        report.require()
    assert err.value.exit_code == 3


def test_bound_saturation_is_not_a_violation():
    g = TimeGrid(0.0, 1.0, 4)
    Q = np.zeros((5, 2, 2), complex)
    Q[:, 0, 1] = Q[:, 1, 0] = 1.0
    assert check_representability(ComplexCurrent(g, Q), np.full((5, 2), 0.5), 1.0)


def test_chain_observable_respects_bound(reshaped_chain):
    spec, program, psi0, _ = reshaped_chain
    J = link_current_from_density(program)
    K = kinetic_from_density(program, J, spec, psi0)
    M = spec.M
    Q = np.zeros((len(program.grid), M, M), complex)
    i = np.arange(M - 1)
    Q[:, i, i + 1] = K.values + 1j * J.values
    Q[:, i + 1, i] = K.values - 1j * J.values
    report = check_representability(ComplexCurrent(program.grid, Q), program.densities, spec.T0)
    assert report.representable


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_state_observable_always_within_bound(seed):
    # any (T, psi) pair satisfies |Q|^2 = 4|T|^2 n_i n_j, so T0 = max|T| bounds it
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    T = A + A.conj().T
    np.fill_diagonal(T, 0.0)
    psi = rng.normal(size=5) + 1j * rng.normal(size=5)
    psi /= np.linalg.norm(psi)
    g = TimeGrid(0.0, 1.0, 2)
    Q = np.repeat(observable_from_state(T, psi)[None], 3, axis=0)
    n = np.repeat((np.abs(psi) ** 2)[None], 3, axis=0)
    assert check_representability(ComplexCurrent(g, Q), n, float(np.max(np.abs(T))), margin=1e-12)
