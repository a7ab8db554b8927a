"""Spin-1/2 pulse design from Bloch-sphere trajectories.

A state ``e^{i beta} (cos(theta/2), e^{i phi} sin(theta/2))`` driven by
``H = -(Bx Sx + By Sy)`` is the two-site lattice with complex hopping
``B = (Bx - i By)/2``. The trajectory ``(theta, phi)`` fixes the field and the
global phase ``beta`` in closed form:

* ``Bx = phi' tan(theta) cos(phi) + theta' sin(phi)``
* ``By = -theta' cos(phi) + phi' tan(theta) sin(phi)``
* ``beta' = phi' tan(theta) tan(theta/2) / 2``

Near the equator the field is finite only if ``phi'`` vanishes there, so
programs are better written in ``gamma = phi' tan(theta)`` and ``phi``: then
``theta = pi/2 - arctan(phi'/gamma)`` and every field component is regular.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import numpy.typing as npt
from scipy.special import cosdg, sindg

from .core import TimeGrid, cumulative_trapezoid, diff2
from .errors import InputError, SingularityError

__all__ = [
    "POLE_MARGIN",
    "FIELD_CAP",
    "CROSSING_TOL",
    "BlochTrajectory",
    "FieldPulse",
    "GammaProgram",
    "BlochReport",
    "NotGate",
    "bloch_state",
    "bloch_to_observable",
    "field_from_bloch",
    "theta_from_gamma",
    "theta_from_ratio",
    "gamma_trajectory",
    "field_from_gamma",
    "not_gate_program",
    "not_gate_pulse",
    "check_bloch_representability",
    "KET_LEFT",
    "KET_RIGHT",
]

ArrayF = npt.NDArray[np.float64]

#: Angular distance from the equator (or a pole) treated as "on" it, in rad.
POLE_MARGIN = 1e-6
#: Largest admissible ``|phi' tan(theta)|``; beyond it the field is deemed divergent.
FIELD_CAP = 1e6
#: ``|phi'|`` above this while on the equator makes a crossing non-perpendicular.
CROSSING_TOL = 1e-8

#: ``|<-|`` and ``|->`` : the ground and excited states of ``-B0 Sx``.
KET_LEFT = np.array([1.0, 1.0], dtype=np.complex128) / np.sqrt(2.0)
KET_RIGHT = np.array([1.0, -1.0], dtype=np.complex128) / np.sqrt(2.0)


def _frozen(a: npt.ArrayLike, n: int, what: str) -> ArrayF:
    a = np.array(a, dtype=np.float64)
    if a.shape != (n,):
        raise InputError(f"{what} must have {n} samples, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{what} contains non-finite samples")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BlochTrajectory:
    """Polar and azimuthal angles on a time grid, with their rates.

    Missing rates are filled by second-order central differences. ``theta``
    must stay at least ``POLE_MARGIN`` away from both poles.
    """

    grid: TimeGrid
    theta: np.ndarray
    phi: np.ndarray
    theta_dot: np.ndarray | None = None
    phi_dot: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.grid)
        theta = _frozen(self.theta, n, "theta")
        phi = _frozen(self.phi, n, "phi")
        if np.any(theta < POLE_MARGIN) or np.any(theta > np.pi - POLE_MARGIN):
            raise SingularityError("theta must stay inside (0, pi), away from the poles")
        dt = self.grid.dt
        td = diff2(theta, dt) if self.theta_dot is None else self.theta_dot
        pd = diff2(phi, dt) if self.phi_dot is None else self.phi_dot
        for name, value in (("theta", theta), ("phi", phi)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "theta_dot", _frozen(td, n, "theta_dot"))
        object.__setattr__(self, "phi_dot", _frozen(pd, n, "phi_dot"))


@dataclass(frozen=True)
class FieldPulse:
    """In-plane field ``(Bx, By)`` on a time grid; ``Bz = 0`` by gauge choice.

    ``field_at`` optionally evaluates the pulse at arbitrary times, which lets
    the propagator sample it at its own quadrature nodes.
    """

    grid: TimeGrid
    bx: np.ndarray
    by: np.ndarray
    field_at: Callable[[np.ndarray], tuple[ArrayF, ArrayF]] | None = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        n = len(self.grid)
        object.__setattr__(self, "bx", _frozen(self.bx, n, "Bx"))
        object.__setattr__(self, "by", _frozen(self.by, n, "By"))

    @property
    def complex_field(self) -> np.ndarray:
        """``(Bx - i By)/2``, the hopping of the equivalent two-site lattice."""
        return 0.5 * (self.bx - 1j * self.by)


@dataclass(frozen=True)
class GammaProgram:
    """Trajectory written in ``gamma = phi' tan(theta)`` and ``phi``.

    Parameters
    ----------
    grid
        Sampling grid.
    gamma
        ``t -> gamma(t)``.
    phi
        ``t -> (phi, phi', phi'')``.
    ratio
        Optional ``t -> (r, r')`` with ``r = phi'/gamma``, for programs where
        both vanish together. Without it ``r`` is the pointwise quotient (with
        the L'Hopital limit ``phi''/gamma'`` at isolated common zeros) and
        ``r'`` comes from central differences.
    phase_trig
        Optional ``t -> (cos phi, sin phi)`` for programs that can evaluate
        them more accurately than ``np.cos(phi)``.
    """

    grid: TimeGrid
    gamma: Callable[[np.ndarray], ArrayF]
    phi: Callable[[np.ndarray], tuple[ArrayF, ArrayF, ArrayF]]
    ratio: Callable[[np.ndarray], tuple[ArrayF, ArrayF]] | None = None
    phase_trig: Callable[[np.ndarray], tuple[ArrayF, ArrayF]] | None = None


@dataclass(frozen=True)
class BlochReport:
    """Samples at which a trajectory runs along the equator.

    Each violation is ``(t, theta, phi_dot)``.
    """

    violations: tuple[tuple[float, float, float], ...]

    @property
    def representable(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.representable

    def require(self) -> None:
        """Raise :class:`SingularityError` if the trajectory runs along the equator."""
        if self.violations:
            t, theta, rate = self.violations[0]
            raise SingularityError(
                f"trajectory moves along the equator at {len(self.violations)} samples; "
                f"first at t={t:.6g} (theta={theta:.6g}, phi_dot={rate:.3g})"
            )


def bloch_state(theta: npt.ArrayLike, phi: npt.ArrayLike, beta: npt.ArrayLike = 0.0) -> np.ndarray:
    """``e^{i beta} (cos(theta/2), e^{i phi} sin(theta/2))``; broadcasts to shape ``(..., 2)``."""
    theta, phi, beta = np.broadcast_arrays(
        np.asarray(theta, np.float64), np.asarray(phi, np.float64), np.asarray(beta, np.float64)
    )
    out = np.empty(theta.shape + (2,), dtype=np.complex128)
    out[..., 0] = np.cos(0.5 * theta)
    out[..., 1] = np.exp(1j * phi) * np.sin(0.5 * theta)
    return out * np.exp(1j * beta)[..., None]


def _on_equator(theta: np.ndarray, phi_dot: np.ndarray) -> np.ndarray:
    # A smooth crossing leaves the equator with |theta - pi/2| ~ |phi'/gamma|, so
    # inside the band phi' alone is not decisive: also require the implied field
    # |phi' tan(theta)| ~ |phi'/cos(theta)| to exceed the cap.
    band = np.abs(theta - 0.5 * np.pi) <= POLE_MARGIN
    rate = np.abs(phi_dot)
    return band & (rate > CROSSING_TOL) & (rate > FIELD_CAP * np.abs(np.cos(theta)))


def bloch_to_observable(
    theta: npt.ArrayLike, phi: npt.ArrayLike, theta_dot: npt.ArrayLike, phi_dot: npt.ArrayLike
) -> np.ndarray | complex:
    """Link observable ``Q = (phi' sin(theta) tan(theta) + i theta' sin(theta)) / 2``.

    ``phi`` does not enter; it is accepted so a full Bloch point can be passed.

    Raises
    ------
    SingularityError
        On the equator with ``phi' != 0``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    td = np.asarray(theta_dot, dtype=np.float64)
    pd = np.asarray(phi_dot, dtype=np.float64)
    if np.any(_on_equator(theta, pd)):
        raise SingularityError("Q diverges on the equator unless phi' = 0 there")
    s = np.sin(theta)
    with np.errstate(invalid="ignore"):
        kinetic = np.where(pd == 0.0, 0.0, pd * s * np.tan(theta))
    q = 0.5 * (kinetic + 1j * td * s)
    return complex(q) if q.ndim == 0 else q


def check_bloch_representability(traj: BlochTrajectory) -> BlochReport:
    """Flag samples where the trajectory moves along the equator.

    A sample is flagged when it lies within ``POLE_MARGIN`` of the equator,
    ``|phi'| > CROSSING_TOL`` and the implied ``|phi' tan(theta)|`` exceeds
    ``FIELD_CAP``. Sign changes of ``theta - pi/2`` between samples are also inspected, with
    ``phi'`` interpolated linearly to the crossing.
    """
    theta, pd, times = traj.theta, traj.phi_dot, traj.grid.times
    found = [(float(times[k]), float(theta[k]), float(pd[k])) for k in np.flatnonzero(_on_equator(theta, pd))]
    d = theta - 0.5 * np.pi
    cross = np.flatnonzero((d[:-1] * d[1:] < 0.0) & (np.abs(d[:-1]) > POLE_MARGIN) & (np.abs(d[1:]) > POLE_MARGIN))
    for k in cross:
        w = d[k] / (d[k] - d[k + 1])
        rate = (1.0 - w) * pd[k] + w * pd[k + 1]
        if abs(rate) > CROSSING_TOL:
            t = (1.0 - w) * times[k] + w * times[k + 1]
            found.append((float(t), 0.5 * np.pi, float(rate)))
    found.sort()
    return BlochReport(tuple(found))


def field_from_bloch(traj: BlochTrajectory, beta0: float = 0.0) -> tuple[FieldPulse, ArrayF]:
    """Field pulse and global phase ``beta(t)`` that drive ``traj``.

    ``beta`` is the trapezoid integral of ``gamma tan(theta/2) / 2`` from ``beta0``.

    Raises
    ------
    SingularityError
        If the trajectory runs along the equator or ``|phi' tan(theta)|``
        exceeds ``FIELD_CAP``.
    """
    report = check_bloch_representability(traj)
    if not report:
        t, _, rate = report.violations[0]
        raise SingularityError(
            f"trajectory moves along the equator at t={t:.6g} (phi'={rate:.3g}); "
            "the required field diverges"
        )
    theta, phi, td, pd = traj.theta, traj.phi, traj.theta_dot, traj.phi_dot
    with np.errstate(invalid="ignore", over="ignore"):
        gamma = np.where(pd == 0.0, 0.0, pd * np.tan(theta))
    if np.any(~np.isfinite(gamma)) or np.any(np.abs(gamma) > FIELD_CAP):
        k = int(np.nanargmax(np.where(np.isfinite(gamma), np.abs(gamma), np.inf)))
        raise SingularityError(
            f"|phi' tan(theta)| exceeds {FIELD_CAP:g} at t={traj.grid.times[k]:.6g}"
        )
    c, s = np.cos(phi), np.sin(phi)
    bx = gamma * c + td * s
    by = -td * c + gamma * s
    beta = beta0 + cumulative_trapezoid(0.5 * gamma * np.tan(0.5 * theta), traj.grid.dt)
    return FieldPulse(traj.grid, bx, by), beta


def theta_from_ratio(ratio: npt.ArrayLike) -> np.ndarray | float:
    """Polar angle for ``r = phi'/gamma``: ``2 arctan(sqrt(r^2+1) - r) = pi/2 - arctan(r)``.

    Evaluated as ``arctan2(1, r)``, which stays accurate for large ``|r|``.
    """
    th = np.arctan2(1.0, np.asarray(ratio, dtype=np.float64))
    return float(th) if th.ndim == 0 else th


def theta_from_gamma(gamma: npt.ArrayLike, phi_dot: npt.ArrayLike) -> np.ndarray | float:
    """Polar angle ``theta in (0, pi)`` from ``gamma`` and ``phi'``.

    Raises
    ------
    SingularityError
        Where ``gamma = 0``: the ratio is infinite (``phi' != 0``) or
        undetermined (``phi' = 0``, pass the limit to :func:`theta_from_ratio`).
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    pd = np.asarray(phi_dot, dtype=np.float64)
    if np.any(gamma == 0.0):
        raise SingularityError(
            "gamma vanishes: phi'/gamma is undefined there; supply its limit to theta_from_ratio"
        )
    return theta_from_ratio(pd / gamma)


def _ratio(prog: GammaProgram, t: np.ndarray, gamma: np.ndarray, pd: np.ndarray, pdd: np.ndarray):
    if prog.ratio is not None:
        r, rd = prog.ratio(t)
        return np.asarray(r, np.float64), np.asarray(rd, np.float64)
    zero = gamma == 0.0
    if np.any(zero & (np.abs(pd) > CROSSING_TOL)):
        k = int(np.flatnonzero(zero & (np.abs(pd) > CROSSING_TOL))[0])
        raise SingularityError(f"gamma = 0 with phi' = {pd[k]:.3g} at t={t[k]:.6g}: infinite ratio")
    r = np.empty_like(gamma)
    r[~zero] = pd[~zero] / gamma[~zero]
    if np.any(zero):
        # L'Hopital at common zeros: r = phi''/gamma'
        dg = diff2(gamma, prog.grid.dt)
        if np.any(dg[zero] == 0.0):
            raise SingularityError("gamma and phi' share a degenerate zero; supply the ratio")
        r[zero] = pdd[zero] / dg[zero]
    if not np.all(np.isfinite(r)):
        raise SingularityError("phi'/gamma is not finite")
    return r, diff2(r, prog.grid.dt)


def gamma_trajectory(prog: GammaProgram) -> BlochTrajectory:
    """Bloch trajectory traced by a gamma program."""
    t = prog.grid.times
    gamma = np.asarray(prog.gamma(t), np.float64)
    phi, pd, pdd = (np.asarray(a, np.float64) for a in prog.phi(t))
    r, rd = _ratio(prog, t, gamma, pd, pdd)
    return BlochTrajectory(prog.grid, theta_from_ratio(r), phi, -rd / (r * r + 1.0), pd)


def _field_samples(prog: GammaProgram, t: np.ndarray, r: np.ndarray, rd: np.ndarray, gamma: np.ndarray, phi: np.ndarray):
    if prog.phase_trig is not None:
        c, s = (np.asarray(a, np.float64) for a in prog.phase_trig(t))
    else:
        c, s = np.cos(phi), np.sin(phi)
    turn = rd / (r * r + 1.0)
    return gamma * c - turn * s, turn * c + gamma * s


def field_from_gamma(prog: GammaProgram, beta0: float = 0.0) -> tuple[FieldPulse, ArrayF]:
    """Field pulse and global phase for a gamma program.

    With ``r = phi'/gamma``:
    ``Bx = gamma cos(phi) - r'/(r^2+1) sin(phi)``,
    ``By = r'/(r^2+1) cos(phi) + gamma sin(phi)`` and
    ``beta' = (gamma sqrt(r^2+1) - phi') / 2``, integrated by the trapezoid rule.

    Raises
    ------
    SingularityError
        If ``r`` is not finite somewhere on the grid.
    """
    t = prog.grid.times
    gamma = np.asarray(prog.gamma(t), np.float64)
    phi, pd, pdd = (np.asarray(a, np.float64) for a in prog.phi(t))
    r, rd = _ratio(prog, t, gamma, pd, pdd)
    bx, by = _field_samples(prog, t, r, rd, gamma, phi)
    beta = beta0 + cumulative_trapezoid(0.5 * (gamma * np.sqrt(r * r + 1.0) - pd), prog.grid.dt)

    field_at = None
    if prog.ratio is not None:

        def field_at(times: np.ndarray) -> tuple[ArrayF, ArrayF]:
            times = np.asarray(times, np.float64)
            g = np.asarray(prog.gamma(times), np.float64)
            ph = np.asarray(prog.phi(times)[0], np.float64)
            rr, rrd = prog.ratio(times)
            return _field_samples(prog, times, rr, rrd, g, ph)

    return FieldPulse(prog.grid, bx, by, field_at), beta


# --------------------------------------------------------------------------
# NOT gate


def _sinc(u: np.ndarray) -> np.ndarray:
    """``sin(pi u)/(pi u)`` via degree-argument sine, exactly zero at nonzero integers."""
    u = np.asarray(u, np.float64)
    out = np.ones_like(u)
    nz = u != 0.0
    out[nz] = sindg(180.0 * u[nz]) / (np.pi * u[nz])
    return out


def not_gate_program(B0: float, tau: float, grid: TimeGrid) -> GammaProgram:
    """Cyclic NOT-gate program with ``gamma(0) = -gamma(tau) = B0``.

    ``gamma = (B0/4) u (u^2 + 3)`` with ``u = 1 - 2t/tau`` and
    ``phi = pi t/tau - sin(4 pi t/tau)/4``. The ratio ``phi'/gamma`` is
    evaluated through ``sin^2(pi u)/u = pi^2 u sinc(u)^2``, which is regular at
    the common zero ``t = tau/2``.
    """
    if not (np.isfinite(B0) and B0 > 0):
        raise InputError(f"B0 must be positive, got {B0}")
    if not (np.isfinite(tau) and tau > 0):
        raise InputError(f"tau must be positive, got {tau}")
    if grid.t_start != 0.0 or not np.isclose(grid.t_end, tau, rtol=0, atol=1e-12 * tau):
        raise InputError(f"time grid must span [0, tau={tau}], got [{grid.t_start}, {grid.t_end}]")
    scale = 8.0 * np.pi / (B0 * tau)
    pi2 = np.pi**2

    def u_of(t: np.ndarray) -> np.ndarray:
        return 1.0 - 2.0 * np.asarray(t, np.float64) / tau

    def gamma(t: np.ndarray) -> ArrayF:
        u = u_of(t)
        return 0.25 * B0 * u * (u * u + 3.0)

    def phi(t: np.ndarray) -> tuple[ArrayF, ArrayF, ArrayF]:
        x = np.asarray(t, np.float64) / tau
        p = np.pi * x - 0.25 * sindg(720.0 * x)
        pd = (2.0 * np.pi / tau) * sindg(360.0 * x) ** 2
        pdd = (4.0 * pi2 / tau**2) * sindg(720.0 * x)
        return p, pd, pdd

    def phase_trig(t: np.ndarray) -> tuple[ArrayF, ArrayF]:
        x = np.asarray(t, np.float64) / tau
        deg = 180.0 * x - (45.0 / np.pi) * sindg(720.0 * x)
        return cosdg(deg), sindg(deg)

    def ratio(t: np.ndarray) -> tuple[ArrayF, ArrayF]:
        u = u_of(t)
        s1 = _sinc(u)
        g = pi2 * u * s1 * s1
        dg = 2.0 * pi2 * _sinc(2.0 * u) - pi2 * s1 * s1
        q = u * u + 3.0
        r = scale * g / q
        rd = scale * (dg * q - 2.0 * u * g) / (q * q) * (-2.0 / tau)
        return r, rd

    return GammaProgram(grid, gamma, phi, ratio, phase_trig)


@dataclass(frozen=True)
class NotGate:
    """NOT-gate pulse with its predictions.

    ``final_state`` is the state ``|<-|`` is driven into, phase included, and
    ``phase_gain`` is ``beta(tau) - beta(0)``.
    """

    pulse: FieldPulse
    program: GammaProgram
    trajectory: BlochTrajectory
    beta: np.ndarray
    final_state: np.ndarray
    phase_gain: float


def not_gate_pulse(B0: float, tau: float, grid: TimeGrid) -> NotGate:
    """Pulse that takes ``|<-|`` to ``|->`` (and back) over ``[0, tau]``.

    The predicted phase gain is ``-pi/2``; the returned value is the
    quadrature of ``beta'`` on ``grid``.
    """
    prog = not_gate_program(B0, tau, grid)
    pulse, beta = field_from_gamma(prog)
    traj = gamma_trajectory(prog)
    gain = float(beta[-1] - beta[0])
    return NotGate(pulse, prog, traj, beta, KET_RIGHT * np.exp(1j * gain), gain)
