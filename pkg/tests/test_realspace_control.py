from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulseforge.core import GridWavefunction1D, SpaceTimeField1D, SpatialGrid, TimeGrid
from pulseforge.errors import InputError, VanishingDensityError
from pulseforge.realspace_control import (
    ScalingProgram,
    base_state_residual,
    continuity_residual,
    harmonic_ground_state,
    oscillator_parameters,
    potential_from_density_1d,
    scaling_observables,
    scaling_solution,
    smooth_ramp,
    vector_potential_from_current_1d,
    velocity_from_density_1d,
)

# fine enough that second-order stencil errors stay below 1e-4
SPACE = SpatialGrid(-10.0, 10.0, 4001)
TIME = TimeGrid(0.0, 2.0, 200)
SHAPE = (201, 4001)


def _gauss(x: np.ndarray) -> np.ndarray:
    return np.exp(-(x**2)) / np.sqrt(np.pi)


def _inner(n: np.ndarray) -> np.ndarray:
    return n >= 1e-3 * n.max(axis=-1, keepdims=True)


def _field(values: np.ndarray) -> SpaceTimeField1D:
    return SpaceTimeField1D(SPACE, TIME, values)


def _translated(u: float) -> tuple[SpaceTimeField1D, np.ndarray]:
    y = SPACE.x[None] - u * TIME.times[:, None]
    n = _gauss(y)
    rate = u * 2 * y * n
    return _field(n), rate


# ---------------------------------------------------------------- velocity


def test_static_density_has_zero_velocity():
    n = _field(np.broadcast_to(_gauss(SPACE.x), SHAPE).copy())
    assert np.max(np.abs(velocity_from_density_1d(n).values)) < 1e-12


def test_rigid_translation_velocity_is_uniform():
    n, rate = _translated(0.7)
    v = velocity_from_density_1d(n, rate)
    inner = _inner(n.values)
    assert np.max(np.abs(v.values[inner] - 0.7)) < 1e-4


def test_scaling_velocity_matches_closed_form():
    tau = 2.0
    prog = ScalingProgram.ramped_harmonic(tau, stretch=0.5, shift=1.0)
    obs = scaling_observables(prog, SPACE, TIME)
    v = velocity_from_density_1d(obs.density, obs.density_rate)
    (a, ad, _), (r, rd, _) = prog.sample(TIME.times)
    exact = (ad / a)[:, None] * (SPACE.x[None] - r[:, None]) + rd[:, None]
    inner = _inner(obs.density.values)
    assert np.max(np.abs(v.values[inner] - exact[inner])) < 1e-4
    assert np.max(np.abs(obs.velocity.values - exact)) < 1e-12


def test_velocity_rejects_norm_drift():
    n = np.broadcast_to(_gauss(SPACE.x), SHAPE) * (1 + TIME.times)[:, None]
    with pytest.raises(InputError):
        velocity_from_density_1d(_field(n))


# ---------------------------------------------------------------- scalar potential


def test_harmonic_density_at_rest_gives_harmonic_potential():
    n = _field(np.broadcast_to(_gauss(SPACE.x), SHAPE).copy())
    rec = potential_from_density_1d(n, n.with_values(np.zeros(SHAPE)))
    inner = _inner(n.values)
    exact = 0.5 * SPACE.x**2
    err = rec.potential.values - exact[None]
    assert np.max(np.abs(err[inner])) < 1e-4


def test_zero_velocity_gives_real_wavefunction():
    n = _field(np.broadcast_to(_gauss(SPACE.x), SHAPE).copy())
    rec = potential_from_density_1d(n, n.with_values(np.zeros(SHAPE)))
    phase = np.angle(rec.psi.values * np.exp(-1j * np.angle(rec.psi.values[:, SPACE.mid_index]))[:, None])
    assert np.max(np.abs(phase)) < 1e-12


def test_galilean_ride():
    u = 0.5
    n, rate = _translated(u)
    v = n.with_values(np.full(SHAPE, u))
    rec = potential_from_density_1d(n, v, v_rate=np.zeros(SHAPE), n_rate=rate)
    y = SPACE.x[None] - u * TIME.times[:, None]
    ymid = -u * TIME.times[:, None]
    exact = 0.5 * y**2 - 0.5 * ymid**2
    inner = _inner(n.values)
    assert np.max(np.abs(rec.potential.values - exact)[inner]) < 1e-4


def test_inconsistent_density_and_velocity_is_flagged():
    # static profile with a uniform flow: d(n u)/dx is not balanced by dn/dt
    n = _field(np.broadcast_to(_gauss(SPACE.x), SHAPE).copy())
    v = n.with_values(np.full(SHAPE, 0.3))
    assert np.max(np.abs(continuity_residual(n, v))) > 0.1
    with pytest.raises(InputError):
        potential_from_density_1d(n, v)


def test_potential_rejects_empty_density():
    n = _field(np.zeros(SHAPE))
    with pytest.raises(VanishingDensityError):
        potential_from_density_1d(n, n)


# ---------------------------------------------------------------- vector potential


def test_zero_current_on_ground_state_encodes_static_field():
    psi0 = harmonic_ground_state(SPACE)
    j = SpaceTimeField1D(SPACE, TIME, np.zeros(SHAPE))
    rec = vector_potential_from_current_1d(j, psi0)
    inner = _inner(psi0.density[None])[0]
    exact = TIME.times[:, None] * SPACE.x[None]  # t dV0/dx
    assert np.max(np.abs(rec.vector_potential.values - exact)[:, inner]) < 1e-4
    assert np.max(np.abs(rec.density.values - psi0.density[None])) == 0.0
    assert np.max(np.abs(rec.velocity.values)) == 0.0


def test_zero_current_free_gaussian_starts_without_vector_potential():
    psi0 = GridWavefunction1D.normalized(SPACE, np.exp(-(SPACE.x**2) / 8))
    j = SpaceTimeField1D(SPACE, TIME, np.zeros(SHAPE))
    rec = vector_potential_from_current_1d(j, psi0)
    assert np.max(np.abs(rec.vector_potential.values[0])) < 1e-12


def test_current_that_empties_a_region_is_rejected():
    psi0 = harmonic_ground_state(SPACE)
    # a steady outflow from the centre drains it
    j = SpaceTimeField1D(SPACE, TIME, np.broadcast_to(5.0 * np.tanh(SPACE.x), SHAPE).copy())
    with pytest.raises(VanishingDensityError):
        vector_potential_from_current_1d(j, psi0)


# ---------------------------------------------------------------- scaling


def test_identity_program_is_stationary():
    prog = ScalingProgram.harmonic()
    obs = scaling_observables(prog, SPACE, TIME)
    np.testing.assert_allclose(obs.density.values, np.broadcast_to(prog.n0(SPACE.x), SHAPE), atol=1e-15)
    assert np.max(np.abs(obs.velocity.values)) == 0.0
    sol = scaling_solution(prog, SPACE, TIME)
    np.testing.assert_allclose(sol.potential.values, np.broadcast_to(prog.V0(SPACE.x), SHAPE), atol=1e-14)
    psi0 = np.sqrt(prog.n0(SPACE.x))
    expect = psi0[None] * np.exp(-1j * prog.E0 * TIME.times)[:, None]
    assert np.max(np.abs(sol.psi.values - expect)) < 1e-12


def test_rigid_transport():
    r = smooth_ramp(0.0, 1.5, 2.0)
    prog = ScalingProgram.harmonic(r0=r)
    obs = scaling_observables(prog, SPACE, TIME)
    r0 = r(TIME.times)[0]
    exact = prog.n0(SPACE.x[None] - r0[:, None])
    assert np.max(np.abs(obs.density.values - exact)) < 1e-14
    sol = scaling_solution(prog, SPACE, TIME)
    _, (rr, _, rdd) = prog.sample(TIME.times)
    V = prog.V0(SPACE.x[None] - rr[:, None]) - rdd[:, None] * SPACE.x[None]
    assert np.max(np.abs(sol.potential.values - V)) < 1e-12


def test_doubling_halves_central_density():
    prog = ScalingProgram.harmonic(alpha=smooth_ramp(1.0, 1.0, 2.0))
    obs = scaling_observables(prog, SPACE, TIME)
    n_end = obs.density.values[-1]
    assert n_end[SPACE.mid_index] == pytest.approx(prog.n0(0.0) / 2, abs=1e-15)
    # the wider profile loses ~1e-11 of its tail outside the box
    assert SPACE.integrate(n_end) == pytest.approx(1.0, abs=1e-10)


def test_scaled_density_satisfies_bohm_identity():
    sp = SpatialGrid(-6.0, 6.0, 2401)
    g = TimeGrid(0.0, 2.0, 4)
    prog = ScalingProgram.ramped_harmonic(2.0)
    obs = scaling_observables(prog, sp, g)
    (a, _, _), (r, _, _) = prog.sample(g.times)
    h = sp.dx
    for k in range(len(g)):
        root = np.sqrt(obs.density.values[k])
        # five-point second derivative
        lap = (-root[4:] + 16 * root[3:-1] - 30 * root[2:-2] + 16 * root[1:-3] - root[:-4]) / (12 * h**2)
        bohm = lap / (2 * prog.mass * root[2:-2])
        y = (sp.x[2:-2] - r[k]) / a[k]
        exact = (prog.V0(y) - prog.E0) / a[k] ** 2
        keep = np.abs(y) < 3.0
        assert np.max(np.abs(bohm - exact)[keep]) < 1e-6


def test_base_state_check_rejects_wrong_base():
    good = ScalingProgram.harmonic()
    assert base_state_residual(good, SPACE) < 1e-10
    bad = ScalingProgram(good.alpha, good.r0, good.V0, good.n0, E0=0.7, mass=1.0)
    assert base_state_residual(bad, SPACE) > 1e-3
    with pytest.raises(InputError):
        scaling_solution(bad, SPACE, TIME)


def test_program_must_start_at_rest():
    with pytest.raises(InputError):
        ScalingProgram.harmonic(r0=lambda t: (np.asarray(t) + 1.0, np.ones_like(t), np.zeros_like(t)))


# ---------------------------------------------------------------- oscillator


def test_fixed_width_gives_fixed_frequency():
    r = smooth_ramp(0.0, 2.0, 2.0)
    prog = ScalingProgram.harmonic(omega0=1.3, mass=0.8, r0=r)
    osc = oscillator_parameters(prog, TIME)
    np.testing.assert_allclose(osc.omega2, 1.3**2, rtol=1e-14)
    _, (r0, _, rdd) = prog.sample(TIME.times)
    np.testing.assert_allclose(osc.force, 0.8 * rdd + 0.8 * 1.3**2 * r0, atol=1e-14)


def test_no_displacement_means_no_force():
    prog = ScalingProgram.harmonic(alpha=smooth_ramp(1.0, 0.7, 2.0))
    osc = oscillator_parameters(prog, TIME)
    assert np.all(osc.force == 0.0)


@settings(max_examples=30, deadline=None)
@given(
    stretch=st.floats(-0.6, 2.0),
    shift=st.floats(-3.0, 3.0),
    tau=st.floats(0.5, 10.0),
    omega0=st.floats(0.2, 5.0),
    mass=st.floats(0.1, 10.0),
)
def test_newton_residual_vanishes(stretch, shift, tau, omega0, mass):
    prog = ScalingProgram.ramped_harmonic(tau, stretch, shift, omega0, mass)
    osc = oscillator_parameters(prog, TimeGrid(0.0, tau, 500))
    assert np.max(np.abs(osc.newton_residual)) <= 1e-12


def test_oscillator_needs_harmonic_base():
    good = ScalingProgram.harmonic()
    quartic = ScalingProgram(good.alpha, good.r0, lambda x: np.asarray(x) ** 4, good.n0, good.E0)
    with pytest.raises(InputError):
        oscillator_parameters(quartic, TIME)
