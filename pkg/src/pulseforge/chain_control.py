"""Density control of an open chain with a fixed real hopping ``T0``.

The chain obeys ``i dpsi_i/dt = -T0 (psi_{i+1} + psi_{i-1}) + v_i(t) psi_i``.
A prescribed density program fixes the link currents through the lattice
continuity equation, the link kinetic terms through the modulus bound
``K^2 + J^2 = 4 T0^2 n_i n_{i+1}``, and finally the on-site potential and the
wavefunction in closed form.

Conventions
-----------
* Links are indexed by their left site: ``J[:, i]`` is ``J_{i,i+1}``.
* ``K_{i,i+1} = Re(2 T0 conj(psi_i) psi_{i+1})``; its sign on each link is read
  from the initial state and held fixed.
* The potential is anchored at the right edge, ``v_M = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import numpy.typing as npt

from .core import (
    DENSITY_FLOOR,
    LatticeWavefunction,
    TimeGrid,
    cumulative_trapezoid,
    diff2,
    piecewise_diff4,
)
from .errors import (
    AmbiguousBranchError,
    InputError,
    ReconstructionMismatchError,
    RepresentabilityError,
    VanishingDensityError,
)
from .lattice_map import observable_from_state

__all__ = [
    "ChainSpec",
    "DensityProgram",
    "LinkSeries",
    "OnsitePotentialSignal",
    "ChainReconstruction",
    "smooth_step",
    "smooth_step_derivatives",
    "ground_state_density_chain",
    "two_stage_density",
    "static_density",
    "link_current_from_density",
    "kinetic_from_density",
    "onsite_potential",
    "lattice_bohm_potential",
    "DUAL_PATH_TOL",
    "BRANCH_TOL",
]

ArrayF = npt.NDArray[np.float64]
RatesFn = Callable[[np.ndarray], tuple[ArrayF, ArrayF, ArrayF]]

#: Relative agreement required between the closed-form potential and the
#: potential re-extracted from the reconstructed wavefunction.
DUAL_PATH_TOL = 1e-6
#: ``|K(t0)|`` below this leaves the branch sign undetermined.
BRANCH_TOL = 1e-8

_NORM_TOL = 1e-10


@dataclass(frozen=True)
class ChainSpec:
    """Open chain of ``M`` sites with real hopping ``T0 > 0``."""

    M: int = 11
    T0: float = 1.0

    def __post_init__(self) -> None:
        if int(self.M) != self.M or self.M < 2:
            raise InputError(f"chain needs at least two sites, got M={self.M}")
        if not (np.isfinite(self.T0) and self.T0 > 0):
            raise InputError(f"hopping must be positive, got T0={self.T0}")


# --------------------------------------------------------------------------
# density programs


def _check_unit_interval(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise InputError("smooth_step is defined on [0, 1] only")
    return np.clip(x, 0.0, 1.0)


def smooth_step(x: npt.ArrayLike) -> np.ndarray | float:
    """``S(x) = x - sin(2 pi x)/(2 pi)`` on ``[0, 1]``.

    ``S(0) = 0``, ``S(1) = 1`` and the first two derivatives vanish at both ends.

    Raises
    ------
    InputError
        If any ``x`` lies outside ``[0, 1]``.
    """
    s = smooth_step_derivatives(x)[0]
    return float(s) if np.ndim(x) == 0 else s


def smooth_step_derivatives(x: npt.ArrayLike) -> tuple[ArrayF, ArrayF, ArrayF]:
    """``S``, ``S'`` and ``S''`` at ``x``."""
    x = _check_unit_interval(x)
    w = 2.0 * np.pi * x
    # w - sin(w) cancels for small w; its Taylor series keeps S >= 0 there
    w2 = w * w
    series = w * w2 / 6.0 * (1.0 - w2 / 20.0 * (1.0 - w2 / 42.0 * (1.0 - w2 / 72.0)))
    s = np.where(w < 1e-2, series, w - np.sin(w)) / (2.0 * np.pi)
    return s, 1.0 - np.cos(w), 2.0 * np.pi * np.sin(w)


def ground_state_density_chain(spec: ChainSpec) -> ArrayF:
    """Site densities of the zero-potential ground state, ``(2/(M+1)) sin^2(pi i/(M+1))``."""
    i = np.arange(1, spec.M + 1)
    return (2.0 / (spec.M + 1)) * np.sin(np.pi * i / (spec.M + 1)) ** 2


@dataclass(frozen=True)
class DensityProgram:
    """Prescribed site densities on a time grid.

    ``rates`` and ``accels`` hold the first and second time derivatives when a
    closed form is known; ``rates_at`` evaluates ``(n, dn/dt, d2n/dt2)`` at
    arbitrary times. ``breaks`` lists grid indices where the program is only
    piecewise smooth (higher derivatives jump), so finite-difference stencils
    can avoid them.
    """

    grid: TimeGrid
    densities: np.ndarray
    rates: np.ndarray | None = None
    accels: np.ndarray | None = None
    rates_at: RatesFn | None = field(default=None, compare=False, repr=False)
    breaks: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        n = np.array(self.densities, dtype=np.float64)
        if n.ndim != 2 or n.shape[0] != len(self.grid) or n.shape[1] < 2:
            raise InputError(f"densities must have shape (n_steps+1, M>=2), got {n.shape}")
        if not np.all(np.isfinite(n)):
            raise InputError("densities contain non-finite samples")
        drift = np.max(np.abs(n.sum(axis=1) - 1.0))
        if drift > _NORM_TOL:
            raise InputError(f"densities are not normalized (max drift {drift:.3g})")
        if np.any(n <= DENSITY_FLOOR):
            k, i = np.unravel_index(np.argmin(n), n.shape)
            raise VanishingDensityError(
                f"density on site {i + 1} is {n[k, i]:.3g} at t={self.grid.times[k]:.6g}"
            )
        n.setflags(write=False)
        object.__setattr__(self, "densities", n)
        for name in ("rates", "accels"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=np.float64)
                if a.shape != n.shape or not np.all(np.isfinite(a)):
                    raise InputError(f"{name} must be finite with shape {n.shape}")
                a.setflags(write=False)
                object.__setattr__(self, name, a)
        object.__setattr__(self, "breaks", tuple(int(b) for b in self.breaks))

    @property
    def n_sites(self) -> int:
        return self.densities.shape[1]

    def time_derivatives(self) -> tuple[ArrayF, ArrayF]:
        """``(dn/dt, d2n/dt2)``: closed forms when present, central differences otherwise."""
        dt = self.grid.dt
        nd = self.rates if self.rates is not None else diff2(self.densities, dt)
        ndd = self.accels if self.accels is not None else diff2(nd, dt)
        return nd, ndd


def two_stage_density(spec: ChainSpec, t1: float, t2: float, grid: TimeGrid) -> DensityProgram:
    """Ground state -> uniform density on ``[0, t1]``, uniform -> Gaussian on ``[t1, t2]``.

    Stage one blends ``n_gs`` into ``1/M`` with ``S(t/t1)``. Stage two uses the
    normalized weights ``exp(-S((t-t1)/(t2-t1)) (i-c)^2)`` centred on the middle
    site ``c = (M+1)/2``. All derivatives are closed-form, so the program is
    available at arbitrary times through ``rates_at``.
    """
    if not (0.0 < t1 < t2):
        raise InputError(f"need 0 < t1 < t2, got t1={t1}, t2={t2}")
    if grid.t_start != 0.0 or not np.isclose(grid.t_end, t2, rtol=0, atol=1e-12 * t2):
        raise InputError(f"time grid must span [0, t2={t2}], got [{grid.t_start}, {grid.t_end}]")
    n_gs = ground_state_density_chain(spec)
    i = np.arange(1, spec.M + 1)
    g = (i - 0.5 * (spec.M + 1)) ** 2
    uniform = np.full(spec.M, 1.0 / spec.M)

    def rates_at(t: np.ndarray) -> tuple[ArrayF, ArrayF, ArrayF]:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        t = np.clip(t, 0.0, t2)
        n = np.empty((t.size, spec.M))
        nd = np.empty_like(n)
        ndd = np.empty_like(n)
        first = t <= t1
        s, s1, s2 = smooth_step_derivatives(t[first] / t1)
        delta = uniform - n_gs
        n[first] = s[:, None] * uniform + (1.0 - s[:, None]) * n_gs
        nd[first] = delta * (s1 / t1)[:, None]
        ndd[first] = delta * (s2 / t1**2)[:, None]
        second = ~first
        span = t2 - t1
        s, s1, s2 = smooth_step_derivatives((t[second] - t1) / span)
        w = np.exp(-s[:, None] * g)
        p = w / w.sum(axis=1, keepdims=True)
        mean = (p * g).sum(axis=1, keepdims=True)
        var = (p * g * g).sum(axis=1, keepdims=True) - mean**2
        dp = p * (mean - g)
        d2p = p * (mean - g) ** 2 - p * var
        sd = (s1 / span)[:, None]
        sdd = (s2 / span**2)[:, None]
        n[second] = p
        nd[second] = dp * sd
        ndd[second] = d2p * sd**2 + dp * sdd
        return n, nd, ndd

    n, nd, ndd = rates_at(grid.times)
    k1 = (t1 - grid.t_start) / grid.dt
    breaks = (int(round(k1)),) if 0 < round(k1) < grid.n_steps else ()
    return DensityProgram(grid, n, nd, ndd, rates_at, breaks)


def static_density(grid: TimeGrid, n: npt.ArrayLike) -> DensityProgram:
    """Time-independent program holding the densities ``n`` fixed."""
    n = np.asarray(n, dtype=np.float64)

    def rates_at(t: np.ndarray) -> tuple[ArrayF, ArrayF, ArrayF]:
        k = np.atleast_1d(t).size
        z = np.zeros((k, n.size))
        return np.broadcast_to(n, (k, n.size)).copy(), z, z.copy()

    return DensityProgram(grid, *rates_at(grid.times), rates_at)


# --------------------------------------------------------------------------
# link observables


@dataclass(frozen=True)
class LinkSeries:
    """Per-link samples ``values[k, i]`` for link ``(i, i+1)`` and their time derivative."""

    grid: TimeGrid
    values: np.ndarray
    rates: np.ndarray


def _currents(nd: np.ndarray, ndd: np.ndarray) -> tuple[ArrayF, ArrayF]:
    return -np.cumsum(nd, axis=-1)[..., :-1], -np.cumsum(ndd, axis=-1)[..., :-1]


def link_current_from_density(program: DensityProgram) -> LinkSeries:
    """``J_{i,i+1} = -sum_{j<=i} dn_j/dt`` and its time derivative."""
    nd, ndd = program.time_derivatives()
    J, Jd = _currents(nd, ndd)
    return LinkSeries(program.grid, J, Jd)


def _branch_signs(spec: ChainSpec, psi0: LatticeWavefunction) -> ArrayF:
    psi = psi0.amplitudes
    if psi.size != spec.M:
        raise InputError(f"initial state has {psi.size} sites, chain has {spec.M}")
    T = np.zeros((spec.M, spec.M))
    idx = np.arange(spec.M - 1)
    T[idx, idx + 1] = T[idx + 1, idx] = spec.T0
    K0 = observable_from_state(T, psi)[idx, idx + 1].real
    weak = np.flatnonzero(np.abs(K0) < BRANCH_TOL)
    if weak.size:
        raise AmbiguousBranchError(
            f"|K(t0)| < {BRANCH_TOL:g} on link(s) {[(int(i) + 1, int(i) + 2) for i in weak]}"
        )
    return np.sign(K0)


def _kinetic(
    n: np.ndarray, nd: np.ndarray, J: np.ndarray, Jd: np.ndarray, T0: float, signs: np.ndarray,
    times: np.ndarray,
) -> tuple[ArrayF, ArrayF]:
    nn = n[..., :-1] * n[..., 1:]
    rad = 4.0 * T0**2 * nn - J**2
    if np.any(rad <= 0.0):
        k, i = np.unravel_index(np.argmin(rad), rad.shape)
        raise RepresentabilityError(
            f"|J| reaches the bound 2 T0 sqrt(n_i n_(i+1)) on link ({i + 1},{i + 2}) "
            f"at t={times[k]:.6g} (radicand {rad[k, i]:.3g})"
        )
    K = signs * np.sqrt(rad)
    Kd = (4.0 * T0**2 * (nd[..., :-1] * n[..., 1:] + n[..., :-1] * nd[..., 1:]) - 2.0 * J * Jd) / (
        2.0 * K
    )
    return K, Kd


def kinetic_from_density(
    program: DensityProgram, J: LinkSeries, spec: ChainSpec, psi0: LatticeWavefunction
) -> LinkSeries:
    """Link kinetic terms ``K = s sqrt(4 T0^2 n_i n_{i+1} - J^2)`` and their rates.

    The branch sign ``s`` of each link is that of ``K`` in ``psi0``.

    Raises
    ------
    RepresentabilityError
        If the radicand is not positive somewhere, i.e. the current saturates
        or exceeds the bound set by ``T0`` and the densities.
    AmbiguousBranchError
        If ``|K(t0)| < BRANCH_TOL`` on some link.
    """
    _check_program(program, spec)
    nd, _ = program.time_derivatives()
    K, Kd = _kinetic(
        program.densities, nd, J.values, J.rates, spec.T0, _branch_signs(spec, psi0),
        program.grid.times,
    )
    return LinkSeries(program.grid, K, Kd)


# --------------------------------------------------------------------------
# potential and wavefunction


@dataclass(frozen=True)
class OnsitePotentialSignal:
    """On-site potentials ``v[k, i]``; gauge: ``v_M = 0`` at every step."""

    grid: TimeGrid
    values: np.ndarray
    potential_at: Callable[[np.ndarray], ArrayF] | None = field(
        default=None, compare=False, repr=False
    )
    gauge: str = "right-edge"


@dataclass(frozen=True)
class ChainReconstruction:
    """On-site potential plus the closed-form wavefunction it drives."""

    potential: OnsitePotentialSignal
    states: np.ndarray
    phases: np.ndarray
    currents: LinkSeries
    kinetic: LinkSeries
    dual_path_error: float


def _site_sums(K: np.ndarray) -> ArrayF:
    """``sum_j K_ij`` over the (at most two) neighbours of each site."""
    shape = K.shape[:-1] + (K.shape[-1] + 1,)
    out = np.zeros(shape)
    out[..., :-1] += K
    out[..., 1:] += K
    return out


def _potential(
    n: np.ndarray, J: np.ndarray, Jd: np.ndarray, K: np.ndarray, Kd: np.ndarray, T0: float
) -> ArrayF:
    # v_i - v_{i+1} = d/dt arg(Q_{i,i+1}) + sumK_i/(2 n_i) - sumK_{i+1}/(2 n_{i+1})
    nn = n[..., :-1] * n[..., 1:]
    arg_rate = (Jd * K - J * Kd) / (4.0 * T0**2 * nn)
    pull = _site_sums(K) / (2.0 * n)
    step = arg_rate + pull[..., :-1] - pull[..., 1:]
    v = np.zeros(n.shape)
    v[..., :-1] = np.flip(np.cumsum(np.flip(step, -1), axis=-1), -1)
    return v


def _check_program(program: DensityProgram, spec: ChainSpec) -> None:
    if program.n_sites != spec.M:
        raise InputError(f"program has {program.n_sites} sites, chain has {spec.M}")


def onsite_potential(
    program: DensityProgram,
    spec: ChainSpec,
    psi0: LatticeWavefunction,
    dual_path_tol: float = DUAL_PATH_TOL,
) -> ChainReconstruction:
    """On-site potential and wavefunction realizing ``program`` from ``psi0``.

    The potential comes from the closed form in ``n``, ``J``, ``K`` and their
    rates. It is then re-extracted from the reconstructed wavefunction,
    ``v_i = Re[(i dpsi_i/dt + T0 (psi_{i+1} + psi_{i-1})) / psi_i]`` with a
    fourth-order time derivative, and the two must agree within
    ``dual_path_tol`` relative to ``max(1, max_i |v_i(t)|)`` at every step,
    after removing their site-uniform difference (a global phase rate).

    Raises
    ------
    InputError
        If ``psi0`` does not carry the program's initial densities.
    ReconstructionMismatchError
        If the two evaluations of the potential disagree.
    """
    _check_program(program, spec)
    n = program.densities
    if np.max(np.abs(psi0.densities - n[0])) > _NORM_TOL:
        raise InputError("initial state densities differ from the program at t0")
    signs = _branch_signs(spec, psi0)
    currents = link_current_from_density(program)
    kinetic = kinetic_from_density(program, currents, spec, psi0)
    v = _potential(n, currents.values, currents.rates, kinetic.values, kinetic.rates, spec.T0)

    dt = program.grid.dt
    phases = np.angle(psi0.amplitudes) + cumulative_trapezoid(
        _site_sums(kinetic.values) / (2.0 * n) - v, dt
    )
    states = np.sqrt(n) * np.exp(1j * phases)

    error = _dual_path_error(states, v, spec.T0, dt, program.breaks)
    if error > dual_path_tol:
        raise ReconstructionMismatchError(
            f"closed-form and wavefunction-derived potentials differ by {error:.3g} "
            f"(relative), tolerance {dual_path_tol:g}"
        )

    potential_at = None
    if program.rates_at is not None:
        rates_at = program.rates_at
        T0 = spec.T0

        def potential_at(t: np.ndarray) -> ArrayF:
            nt, ndt, nddt = rates_at(np.asarray(t))
            Jt, Jdt = _currents(ndt, nddt)
            Kt, Kdt = _kinetic(nt, ndt, Jt, Jdt, T0, signs, np.atleast_1d(t))
            return _potential(nt, Jt, Jdt, Kt, Kdt, T0)

    return ChainReconstruction(
        OnsitePotentialSignal(program.grid, v, potential_at),
        states,
        phases,
        currents,
        kinetic,
        error,
    )


def _dual_path_error(
    states: np.ndarray, v: np.ndarray, T0: float, dt: float, breaks: tuple[int, ...]
) -> float:
    if states.shape[0] < 5:
        return 0.0
    dpsi = piecewise_diff4(states, dt, breaks)
    neighbours = np.zeros_like(states)
    neighbours[:, :-1] += states[:, 1:]
    neighbours[:, 1:] += states[:, :-1]
    v_direct = np.real((1j * dpsi + T0 * neighbours) / states)
    # a site-uniform offset is a global phase (pure gauge): compare modulo it
    gap = v_direct - v
    gap -= gap.mean(axis=1, keepdims=True)
    scale = np.maximum(1.0, np.max(np.abs(v), axis=1))
    return float(np.max(np.max(np.abs(gap), axis=1) / scale))


def lattice_bohm_potential(n: npt.ArrayLike, spec: ChainSpec) -> ArrayF:
    """Static potential whose ground state has site densities ``n`` (gauge ``v_M = 0``).

    ``v_i - v_{i+1} = T0 [(r_{i-1} + r_{i+1})/r_i - (r_i + r_{i+2})/r_{i+1}]``
    with ``r = sqrt(n)`` and out-of-range ``r`` set to zero.

    Raises
    ------
    VanishingDensityError
        If some ``n_i <= DENSITY_FLOOR``.
    """
    n = np.asarray(n, dtype=np.float64)
    if n.ndim != 1 or n.size != spec.M:
        raise InputError(f"expected {spec.M} site densities, got shape {n.shape}")
    if np.any(n <= DENSITY_FLOOR):
        raise VanishingDensityError(f"site densities must exceed {DENSITY_FLOOR:g}")
    r = np.sqrt(n)
    K = 2.0 * spec.T0 * r[:-1] * r[1:]
    z = np.zeros(spec.M - 1)
    return _potential(n, z, z, K, z, spec.T0)
