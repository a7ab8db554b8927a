"""Inverse maps for one particle on a 1D grid.

Writing ``psi = sqrt(n) e^{i phi}`` turns the Schrödinger equation into a
continuity equation for ``n`` and a Bernoulli equation for ``phi``. Given the
density and velocity (or the current) these are solved for the driving field:

* Scalar-potential gauge, ``i dpsi/dt = (-d2/dx2 / 2m + V) psi``:
  ``V = Q_B - m int_{x_mid}^x dv/dt - m v^2/2 - dC/dt`` with the Bohm term
  ``Q_B = (d2 sqrt(n)/dx2) / (2 m sqrt(n))`` and ``phi = m int_{x_mid}^x v + C``.
* Temporal gauge, ``i dpsi/dt = (-i d/dx - A)^2 psi / 2m``:
  ``phi = phi_0 + int (Q_B - m v^2/2) dt`` and ``A = dphi/dx - m v``.

The scaling family ``n = n0((x - r0)/alpha)/alpha`` with linear velocity
``v = (alpha'/alpha)(x - r0) + r0'`` is solved in closed form; for a harmonic
base potential it is the driven oscillator with ``omega^2 = omega0^2/alpha^4 -
alpha''/alpha`` and force ``f = m omega^2 r0 + m r0''``.

Spatial derivatives are second-order central differences. Samples where the
density is at or below ``DENSITY_FLOOR`` form the "wings": quantities divided
by the density are continued there from the nearest valid node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import numpy.typing as npt

from .core import (
    DENSITY_FLOOR,
    GridWavefunction1D,
    SpaceTimeField1D,
    SpatialGrid,
    TimeGrid,
    cumulative_trapezoid,
    diff2,
)
from .errors import InputError, VanishingDensityError

__all__ = [
    "ScalingProgram",
    "ScalingObservables",
    "ScalingSolution",
    "OscillatorParams",
    "PotentialReconstruction",
    "VectorPotentialReconstruction",
    "velocity_from_density_1d",
    "potential_from_density_1d",
    "vector_potential_from_current_1d",
    "scaling_observables",
    "scaling_solution",
    "oscillator_parameters",
    "harmonic_ground_state",
    "smooth_ramp",
    "continuity_residual",
    "base_state_residual",
    "BASE_STATE_TOL",
    "CONTINUITY_TOL",
]

ArrayF = npt.NDArray[np.float64]
Trajectory = Callable[[np.ndarray], tuple[ArrayF, ArrayF, ArrayF]]

#: Relative stationary-residual bound for the base state of a scaling program.
BASE_STATE_TOL = 1e-6
#: Relative continuity-residual bound for density/velocity pairs. It catches
#: inconsistent inputs, not discretization error.
CONTINUITY_TOL = 1e-2


def _wing_fill(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace entries outside ``valid`` (per row) by the nearest valid entry."""
    out = np.array(values, dtype=np.float64, copy=True)
    if valid.all():
        return out
    n_pts = valid.shape[-1]
    idx = np.arange(n_pts)
    for k in range(out.shape[0]):
        good = np.flatnonzero(valid[k])
        if good.size == 0:
            raise VanishingDensityError("density is below the floor everywhere")
        nearest = good[np.clip(np.searchsorted(good, idx), 0, good.size - 1)]
        left = good[np.clip(np.searchsorted(good, idx) - 1, 0, good.size - 1)]
        pick = np.where(np.abs(idx - left) <= np.abs(nearest - idx), left, nearest)
        out[k] = out[k, pick]
    return out


def _bohm(n: np.ndarray, dx: float, mass: float) -> tuple[ArrayF, np.ndarray]:
    """Bohm term on ``sqrt(n)`` (rows are time steps) and the mask of valid nodes."""
    valid = n > DENSITY_FLOOR
    r = np.sqrt(np.clip(n, 0.0, None))
    lap = np.zeros_like(r)
    lap[:, 1:-1] = (r[:, 2:] - 2.0 * r[:, 1:-1] + r[:, :-2]) / (dx * dx)
    inner = valid.copy()
    inner[:, 0] = inner[:, -1] = False
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(inner, lap / (2.0 * mass * r), 0.0)
    return _wing_fill(q, inner), inner


def _space_integral_from_mid(f: np.ndarray, space: SpatialGrid) -> ArrayF:
    """``int_{x_mid}^x f dx'`` along the last axis (trapezoid)."""
    F = cumulative_trapezoid(f, space.dx, axis=-1)
    return F - F[..., space.mid_index : space.mid_index + 1]


def _dx(f: np.ndarray, space: SpatialGrid) -> ArrayF:
    return diff2(f, space.dx, axis=-1)


def _check_same_grids(a: SpaceTimeField1D, b: SpaceTimeField1D, what: str) -> None:
    if a.space != b.space or a.time != b.time:
        raise InputError(f"{what} live on different grids")


# --------------------------------------------------------------------------
# density / velocity -> scalar potential


def velocity_from_density_1d(
    n: SpaceTimeField1D,
    n_rate: np.ndarray | None = None,
    drift_tol: float = 1e-6,
) -> SpaceTimeField1D:
    """Velocity with zero flux through the walls: ``n v = -int_{x_min}^x dn/dt``.

    Norm conservation makes this equal to ``int_x^{x_max} dn/dt``; each half of
    the grid is integrated from its nearer wall so the low-density wings do not
    inherit the cancellation error of the bulk.

    ``n_rate`` is ``dn/dt`` when known in closed form; otherwise it is taken
    from central differences in time. In the wings ``v`` is continued from the
    nearest node above the density floor.

    Raises
    ------
    InputError
        If ``int dn/dt dx`` drifts from zero by more than ``drift_tol`` relative
        to ``int |dn/dt| dx`` (the norm is not conserved).
    """
    dens = np.asarray(n.values, dtype=np.float64)
    rate = diff2(dens, n.time.dt) if n_rate is None else np.asarray(n_rate, dtype=np.float64)
    if rate.shape != dens.shape:
        raise InputError(f"density rate has shape {rate.shape}, expected {dens.shape}")
    from_left = cumulative_trapezoid(rate, n.space.dx, axis=1)
    from_right = cumulative_trapezoid(rate[:, ::-1], n.space.dx, axis=1)[:, ::-1]
    total = from_left[:, -1]
    scale = n.space.integrate(np.abs(rate))
    if np.any(np.abs(total) > drift_tol * np.maximum(scale, 1e-300) + 1e-14):
        k = int(np.argmax(np.abs(total)))
        raise InputError(
            f"density is not normalized in time: d/dt int n dx = {total[k]:.3g} "
            f"at t={n.time.times[k]:.6g}"
        )
    valid = dens > DENSITY_FLOOR
    left_half = np.arange(dens.shape[1]) <= n.space.mid_index
    current = np.where(left_half, -from_left, from_right)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(valid, current / dens, 0.0)
    return n.with_values(_wing_fill(v, valid))


@dataclass(frozen=True)
class PotentialReconstruction:
    """Scalar potential (zero at the grid midpoint) and the wavefunction it drives."""

    potential: SpaceTimeField1D
    psi: SpaceTimeField1D
    valid: np.ndarray


def continuity_residual(
    n: SpaceTimeField1D, v: SpaceTimeField1D, n_rate: np.ndarray | None = None
) -> ArrayF:
    """``dn/dt + d(n v)/dx`` on every node (time derivative by central differences
    unless ``n_rate`` is supplied)."""
    rate = diff2(n.values, n.time.dt) if n_rate is None else np.asarray(n_rate, np.float64)
    return rate + _dx(n.values * v.values, n.space)


def potential_from_density_1d(
    n: SpaceTimeField1D,
    v: SpaceTimeField1D,
    v_rate: np.ndarray | None = None,
    n_rate: np.ndarray | None = None,
    continuity_tol: float = CONTINUITY_TOL,
) -> PotentialReconstruction:
    """Scalar potential and wavefunction that realize the pair ``(n, v)``.

    ``dv/dt`` and ``dn/dt`` are taken from ``v_rate``/``n_rate`` when given,
    else from central differences in time. The gauge constant is fixed so that
    ``V(x_mid, t) = 0``, and ``phi(x_mid, 0) = 0``.

    Raises
    ------
    VanishingDensityError
        If the density is below the floor on the whole grid at some step.
    InputError
        If ``n`` and ``v`` violate continuity by more than ``continuity_tol``
        relative to ``max |dn/dt|`` (on nodes above the density floor).
    """
    _check_same_grids(n, v, "density and velocity")
    space, time, m = n.space, n.time, n.mass
    dens = np.asarray(n.values, dtype=np.float64)
    vel = np.asarray(v.values, dtype=np.float64)
    if np.any(dens < 0):
        raise InputError("density must be nonnegative")
    bohm, valid = _bohm(dens, space.dx, m)

    rate = diff2(dens, time.dt) if n_rate is None else np.asarray(n_rate, np.float64)
    res = continuity_residual(n, v, rate)
    scale = max(float(np.max(np.abs(rate))), 1e-300)
    worst = float(np.max(np.abs(np.where(valid, res, 0.0))))
    if worst > continuity_tol * scale and worst > 1e-12:
        raise InputError(
            f"density and velocity violate continuity (residual {worst:.3g}, "
            f"scale {scale:.3g})"
        )

    vdot = diff2(vel, time.dt) if v_rate is None else np.asarray(v_rate, np.float64)
    inertia = m * _space_integral_from_mid(vdot, space)
    raw = bohm - inertia - 0.5 * m * vel**2
    c_rate = raw[:, space.mid_index]
    V = raw - c_rate[:, None]
    phase = m * _space_integral_from_mid(vel, space) + cumulative_trapezoid(c_rate, time.dt)[:, None]
    psi = np.sqrt(np.clip(dens, 0.0, None)) * np.exp(1j * phase)
    return PotentialReconstruction(n.with_values(V), n.with_values(psi), valid)


# --------------------------------------------------------------------------
# current -> vector potential


@dataclass(frozen=True)
class VectorPotentialReconstruction:
    """Temporal-gauge vector potential and the wavefunction it drives."""

    vector_potential: SpaceTimeField1D
    psi: SpaceTimeField1D
    density: SpaceTimeField1D
    velocity: SpaceTimeField1D
    valid: np.ndarray


def vector_potential_from_current_1d(
    j: SpaceTimeField1D, psi0: GridWavefunction1D
) -> VectorPotentialReconstruction:
    """Vector potential and wavefunction for a prescribed current ``j(x, t)``.

    ``n = n0 - int dj/dx dt``, ``v = j/n``,
    ``phi = phi_0 + int (Q_B - m v^2/2) dt`` and ``A = dphi/dx - m v``.

    Raises
    ------
    VanishingDensityError
        If ``psi0`` has an interior node or the accumulated outflow exhausts the
        initial density somewhere it was above the floor.
    """
    space, time, m = j.space, j.time, psi0.mass
    if psi0.grid != space:
        raise InputError("current and initial state live on different grids")
    if j.mass != m:
        raise InputError("current and initial state disagree on the mass")
    amp0 = psi0.amplitudes
    n0 = np.abs(amp0) ** 2
    support = n0 > DENSITY_FLOOR
    inner = np.flatnonzero(support)
    if inner.size == 0 or np.any(~support[inner[0] : inner[-1] + 1]):
        raise VanishingDensityError("initial state has a node inside its support")
    cur = np.asarray(j.values, dtype=np.float64)
    dens = n0 - cumulative_trapezoid(_dx(cur, space), time.dt)
    if np.any(dens[:, support] <= DENSITY_FLOOR):
        k, i = np.argwhere((dens <= DENSITY_FLOOR) & support)[0]
        raise VanishingDensityError(
            f"prescribed current empties x={space.x[i]:.6g} at t={time.times[k]:.6g}: "
            "the state would develop a node"
        )
    valid = np.broadcast_to(support, dens.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        vel = _wing_fill(np.where(valid, cur / dens, 0.0), valid)
    bohm, _ = _bohm(np.where(valid, dens, 0.0), space.dx, m)
    phi0 = np.unwrap(np.angle(np.where(support, amp0, 1.0)))
    phase = phi0 + cumulative_trapezoid(bohm - 0.5 * m * vel**2, time.dt)
    A = _dx(phase, space) - m * vel
    psi = np.sqrt(np.clip(dens, 0.0, None)) * np.exp(1j * phase)
    f = j.with_values
    return VectorPotentialReconstruction(f(A), f(psi), f(dens), f(vel), valid)


# --------------------------------------------------------------------------
# scaling solutions


def _constant(value: float) -> Trajectory:
    def traj(t: np.ndarray) -> tuple[ArrayF, ArrayF, ArrayF]:
        t = np.asarray(t, np.float64)
        return np.full_like(t, value), np.zeros_like(t), np.zeros_like(t)

    return traj


def smooth_ramp(start: float, change: float, tau: float) -> Trajectory:
    """``start + change * S(t/tau)`` with ``S(x) = x - sin(2 pi x)/(2 pi)``, frozen for ``t > tau``."""
    if not tau > 0:
        raise InputError("ramp duration must be positive")

    def traj(t: np.ndarray) -> tuple[ArrayF, ArrayF, ArrayF]:
        x = np.clip(np.asarray(t, np.float64) / tau, 0.0, 1.0)
        w = 2.0 * np.pi * x
        s = x - np.sin(w) / (2.0 * np.pi)
        return start + change * s, change * (1.0 - np.cos(w)) / tau, change * 2.0 * np.pi * np.sin(w) / tau**2

    return traj


@dataclass(frozen=True)
class ScalingProgram:
    """Scale factor ``alpha(t)`` and centre ``r0(t)`` applied to a stationary base state.

    ``alpha`` and ``r0`` map times to ``(value, rate, acceleration)``. The base
    is ``V0(x)``, its ground-state density ``n0(x)`` with energy ``E0``, and the
    optional ``dn0 = n0'`` used for closed-form density rates. ``omega0`` is set
    only for a harmonic base ``V0 = m omega0^2 x^2 / 2``.
    """

    alpha: Trajectory
    r0: Trajectory
    V0: Callable[[np.ndarray], ArrayF]
    n0: Callable[[np.ndarray], ArrayF]
    E0: float
    mass: float = 1.0
    dn0: Callable[[np.ndarray], ArrayF] | None = field(default=None, compare=False)
    omega0: float | None = None

    def __post_init__(self) -> None:
        if not self.mass > 0:
            raise InputError("mass must be positive")
        a, ad, _ = (np.asarray(q, np.float64) for q in self.alpha(np.array([0.0])))
        r, rd, _ = (np.asarray(q, np.float64) for q in self.r0(np.array([0.0])))
        if not (np.isclose(a[0], 1.0, rtol=0, atol=1e-12) and abs(ad[0]) <= 1e-12):
            raise InputError("scaling program must start from alpha = 1 at rest")
        if abs(r[0]) > 1e-12 or abs(rd[0]) > 1e-12:
            raise InputError("scaling program must start from r0 = 0 at rest")

    @classmethod
    def harmonic(
        cls,
        omega0: float = 1.0,
        mass: float = 1.0,
        alpha: Trajectory | None = None,
        r0: Trajectory | None = None,
    ) -> "ScalingProgram":
        """Harmonic base ``V0 = m omega0^2 x^2/2`` with its Gaussian ground state."""
        if not omega0 > 0:
            raise InputError("omega0 must be positive")
        k = mass * omega0

        def n0(x: np.ndarray) -> ArrayF:
            x = np.asarray(x, np.float64)
            return np.sqrt(k / np.pi) * np.exp(-k * x * x)

        return cls(
            alpha=alpha or _constant(1.0),
            r0=r0 or _constant(0.0),
            V0=lambda x: 0.5 * mass * omega0**2 * np.asarray(x, np.float64) ** 2,
            n0=n0,
            E0=0.5 * omega0,
            mass=mass,
            dn0=lambda x: -2.0 * k * np.asarray(x, np.float64) * n0(x),
            omega0=omega0,
        )

    @classmethod
    def ramped_harmonic(
        cls,
        tau: float,
        stretch: float = 0.5,
        shift: float = 1.0,
        omega0: float = 1.0,
        mass: float = 1.0,
    ) -> "ScalingProgram":
        """Harmonic program with ``alpha = 1 + stretch S(t/tau)`` and ``r0 = shift S(t/tau)``."""
        if not stretch > -1.0:
            raise InputError("stretch must keep alpha positive")
        return cls.harmonic(omega0, mass, smooth_ramp(1.0, stretch, tau), smooth_ramp(0.0, shift, tau))

    def sample(self, times: np.ndarray) -> tuple[tuple[ArrayF, ArrayF, ArrayF], tuple[ArrayF, ArrayF, ArrayF]]:
        a = tuple(np.asarray(q, np.float64) for q in self.alpha(times))
        r = tuple(np.asarray(q, np.float64) for q in self.r0(times))
        if np.any(a[0] <= 0):
            raise InputError("scale factor alpha must stay positive")
        return a, r  # type: ignore[return-value]


def base_state_residual(prog: ScalingProgram, space: SpatialGrid) -> float:
    """Relative residual of ``(-d2/dx2 / 2m + V0 - E0) sqrt(n0)`` on ``space``.

    The second derivative is spectral (FFT), so the check measures whether the
    base state is right rather than the resolution of a finite-difference
    stencil. The state must be negligible at the walls.
    """
    x = space.x
    r = np.sqrt(np.asarray(prog.n0(x), np.float64))
    k = 2.0 * np.pi * np.fft.fftfreq(x.size, d=space.dx)
    lap = np.real(np.fft.ifft(-(k**2) * np.fft.fft(r)))
    kinetic = -lap / (2.0 * prog.mass)
    V0 = np.asarray(prog.V0(x), np.float64)
    res = kinetic + (V0 - prog.E0) * r
    scale = np.linalg.norm(kinetic) + np.linalg.norm(V0 * r) + abs(prog.E0) * np.linalg.norm(r)
    return float(np.linalg.norm(res) / scale)


@dataclass(frozen=True)
class ScalingObservables:
    """Density and velocity of a scaling program, with closed-form time derivatives."""

    density: SpaceTimeField1D
    velocity: SpaceTimeField1D
    density_rate: np.ndarray | None
    velocity_rate: np.ndarray


def scaling_observables(prog: ScalingProgram, space: SpatialGrid, time: TimeGrid) -> ScalingObservables:
    """``n = n0((x - r0)/alpha)/alpha`` and ``v = (alpha'/alpha)(x - r0) + r0'``."""
    t = time.times
    (a, ad, add), (r, rd, rdd) = prog.sample(t)
    x = space.x[None, :]
    a, ad, add, r, rd, rdd = (q[:, None] for q in (a, ad, add, r, rd, rdd))
    y = (x - r) / a
    n = np.asarray(prog.n0(y), np.float64) / a
    v = (ad / a) * (x - r) + rd
    v_rate = (add / a - (ad / a) ** 2) * (x - r) - (ad / a) * rd + rdd
    n_rate = None
    if prog.dn0 is not None:
        # dn/dt = -d(n v)/dx with n v = n0(y)(alpha' y + r0')/alpha
        dn0 = np.asarray(prog.dn0(y), np.float64)
        n_rate = -(dn0 * (ad * y + rd) / a + n * ad) / a
    mk = lambda vals: SpaceTimeField1D(space, time, vals, prog.mass)  # noqa: E731
    return ScalingObservables(mk(n), mk(v), n_rate, v_rate)


@dataclass(frozen=True)
class ScalingSolution:
    """Closed-form potential and wavefunction of a scaling program.

    ``potential_at(x, t)`` broadcasts ``x`` against ``t`` and is exact at any
    time, so a propagator can sample it at half steps.
    """

    potential: SpaceTimeField1D
    psi: SpaceTimeField1D
    potential_at: Callable[[np.ndarray, np.ndarray], ArrayF] = field(compare=False, repr=False)
    base_residual: float = 0.0


def _scaling_potential(prog: ScalingProgram, x: np.ndarray, t: np.ndarray) -> ArrayF:
    x, t = np.broadcast_arrays(np.asarray(x, np.float64), np.asarray(t, np.float64))
    (a, _, add), (r, _, rdd) = prog.sample(t)
    m = prog.mass
    y = (x - r) / a
    return np.asarray(prog.V0(y), np.float64) / a**2 - m * rdd * x - 0.5 * m * (add / a) * (x - r) ** 2


def scaling_solution(
    prog: ScalingProgram,
    space: SpatialGrid,
    time: TimeGrid,
    base_tol: float = BASE_STATE_TOL,
) -> ScalingSolution:
    """Potential ``V = V0(y)/alpha^2 - m r0'' x - (m/2)(alpha''/alpha)(x - r0)^2`` and wavefunction.

    ``y = (x - r0)/alpha``. The wavefunction is ``sqrt(n) e^{i phi}`` with
    ``phi = (m/2)(alpha'/alpha)(x - r0)^2 + m r0' x - int (E0/alpha^2 + m r0'^2/2) dt``,
    the time integral taken by the trapezoid rule on ``time``.

    Raises
    ------
    InputError
        If ``n0`` fails the stationary check against ``V0`` and ``E0``.
    """
    residual = base_state_residual(prog, space)
    if residual > base_tol:
        raise InputError(
            f"n0 is not the ground-state density of V0 at E0 (relative residual {residual:.3g})"
        )
    t = time.times
    (a, ad, _), (r, rd, _) = prog.sample(t)
    m = prog.mass
    obs = scaling_observables(prog, space, time)
    x = space.x[None, :]
    global_phase = cumulative_trapezoid(prog.E0 / a**2 + 0.5 * m * rd**2, time.dt)
    phase = 0.5 * m * (ad / a)[:, None] * (x - r[:, None]) ** 2 + m * rd[:, None] * x - global_phase[:, None]
    psi = np.sqrt(obs.density.values) * np.exp(1j * phase)
    V = _scaling_potential(prog, x, t[:, None])
    return ScalingSolution(
        SpaceTimeField1D(space, time, V, m),
        SpaceTimeField1D(space, time, psi, m),
        lambda xx, tt: _scaling_potential(prog, xx, tt),
        residual,
    )


def harmonic_ground_state(space: SpatialGrid, omega0: float = 1.0, mass: float = 1.0) -> GridWavefunction1D:
    """Gaussian ground state of ``m omega0^2 x^2/2`` sampled on ``space`` (walls zeroed, renormalized)."""
    k = mass * omega0
    amp = (k / np.pi) ** 0.25 * np.exp(-0.5 * k * space.x**2)
    return GridWavefunction1D.normalized(space, amp, mass=mass)


@dataclass(frozen=True)
class OscillatorParams:
    """Driven-oscillator form of a harmonic scaling program.

    ``omega2 = omega0^2/alpha^4 - alpha''/alpha`` (may dip below zero),
    ``force = m omega2 r0 + m r0''`` and the Newton residual
    ``m r0'' + m omega2 r0 - force``.
    """

    time: TimeGrid
    omega0: float
    mass: float
    omega2: np.ndarray
    force: np.ndarray
    newton_residual: np.ndarray


def oscillator_parameters(prog: ScalingProgram, time: TimeGrid) -> OscillatorParams:
    """Frequency and force of the driven oscillator equivalent to ``prog``.

    Raises
    ------
    InputError
        If the base potential is not harmonic.
    """
    if prog.omega0 is None:
        raise InputError("oscillator parameters need a harmonic base potential")
    (a, _, add), (r, _, rdd) = prog.sample(time.times)
    m, w0 = prog.mass, prog.omega0
    omega2 = w0**2 / a**4 - add / a
    force = m * omega2 * r + m * rdd
    residual = m * rdd + m * omega2 * r - force
    return OscillatorParams(time, w0, m, omega2, force, residual)
