"""Lattice map between the complex link current and complex hoppings.

For a particle on an ``M``-site lattice with ``i dpsi_i/dt = -sum_j T_ij psi_j``
the link observable is ``Q_ij = 2 T_ij conj(psi_i) psi_j``. Its real part ``K``
is the link kinetic term and its imaginary part ``J`` the link current, with
``dn_i/dt = -sum_j J_ij``. Given ``Q(t)`` and a nodeless initial state the
hoppings and the wavefunction follow in closed form, up to one quadrature for
the densities and one for the phases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .core import DENSITY_FLOOR, LatticeWavefunction, TimeGrid, cumulative_quad4
from .errors import InputError, RepresentabilityError, VanishingDensityError

__all__ = [
    "ComplexCurrent",
    "HoppingSignal",
    "LatticeReconstruction",
    "RepresentabilityReport",
    "observable_from_state",
    "reconstruct_hopping",
    "check_representability",
]


def _mirror_upper(A: np.ndarray) -> np.ndarray:
    """Hermitian matrix (stack) built from the strict upper triangle of ``A``."""
    M = A.shape[-1]
    iu = np.triu_indices(M, 1)
    out = np.zeros(A.shape, dtype=np.complex128)
    out[..., iu[0], iu[1]] = A[..., iu[0], iu[1]]
    out[..., iu[1], iu[0]] = np.conj(A[..., iu[0], iu[1]])
    return out


def _check_link_matrices(values: np.ndarray, grid: TimeGrid, what: str) -> np.ndarray:
    A = np.asarray(values, dtype=np.complex128)
    if A.ndim != 3 or A.shape[0] != len(grid) or A.shape[1] != A.shape[2]:
        raise InputError(f"{what} must have shape (n_steps+1, M, M), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{what} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(A))))
    gap = np.max(np.abs(A - np.conj(np.swapaxes(A, 1, 2))))
    if gap > 1e-10 * scale:
        raise InputError(f"{what} is not Hermitian (max gap {gap:.3g})")
    if np.max(np.abs(np.diagonal(A, axis1=1, axis2=2))) > 1e-10 * scale:
        raise InputError(f"{what} must have a vanishing diagonal")
    A = _mirror_upper(A)
    A.setflags(write=False)
    return A


@dataclass(frozen=True)
class ComplexCurrent:
    """Link observable ``Q_ij(t) = K_ij + i J_ij`` on a time grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _check_link_matrices(self.values, self.grid, "Q"))

    @property
    def kinetic(self) -> np.ndarray:
        return self.values.real

    @property
    def current(self) -> np.ndarray:
        return self.values.imag

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class HoppingSignal:
    """Complex hopping matrices ``T_ij(t)`` with ``T_ji = conj(T_ij)``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _check_link_matrices(self.values, self.grid, "T"))


@dataclass(frozen=True)
class LatticeReconstruction:
    hoppings: HoppingSignal
    states: np.ndarray
    densities: np.ndarray
    phases: np.ndarray


def observable_from_state(T: np.ndarray, psi: np.ndarray | LatticeWavefunction) -> np.ndarray:
    """``Q_ij = 2 T_ij conj(psi_i) psi_j`` for one step or a stack of steps.

    ``T`` has shape ``(..., M, M)`` and ``psi`` shape ``(..., M)``. The lower
    triangle is the exact conjugate of the upper one.
    """
    T = np.asarray(T, dtype=np.complex128)
    psi = np.asarray(getattr(psi, "amplitudes", psi), dtype=np.complex128)
    if T.shape[-1] != T.shape[-2] or psi.shape[-1] != T.shape[-1]:
        raise InputError(f"dimension mismatch: T {T.shape}, psi {psi.shape}")
    Q = 2.0 * T * (np.conj(psi)[..., :, None] * psi[..., None, :])
    return _mirror_upper(Q)


_PHASE_SUBSTEPS = 4
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


def _cumulative_phase(times: np.ndarray, kinetic: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Running integral of ``kinetic / (2 n)`` along axis 0.

    Near a near-node the ratio spikes over a few samples although ``kinetic``
    and ``n`` stay smooth, so both are interpolated by cubic splines and the
    ratio is integrated with three-point Gauss rules on sub-intervals.
    """
    num = CubicSpline(times, kinetic, axis=0)
    den = CubicSpline(times, n, axis=0)
    h = (times[1] - times[0]) / _PHASE_SUBSTEPS
    steps = np.zeros((times.size - 1,) + n.shape[1:])
    for s in range(_PHASE_SUBSTEPS):
        for x, w in zip(_GAUSS_X, _GAUSS_W):
            at = times[:-1] + h * (s + 0.5 * (x + 1.0))
            steps += w * num(at) / den(at)
    out = np.zeros_like(n)
    np.cumsum(0.25 * h * steps, axis=0, out=out[1:])
    return out


def reconstruct_hopping(
    Q: ComplexCurrent,
    psi0: LatticeWavefunction,
    density_floor: float = DENSITY_FLOOR,
) -> LatticeReconstruction:
    """Hoppings and wavefunction generating a prescribed complex current.

    Densities come from integrating the lattice continuity equation with a
    fourth-order cumulative quadrature on ``Q.grid``. Phases come from
    integrating ``sum_j K_ij / (2 n_i)`` on spline-refined sub-intervals, which
    stays accurate when a density dips close to zero. Then
    ``T_ij = Q_ij / (2 conj(psi_i) psi_j)``.

    Raises
    ------
    VanishingDensityError
        If the initial state has a node or a density reaches ``density_floor``.
    """
    psi0_amp = psi0.amplitudes
    M = Q.n_sites
    if psi0_amp.size != M:
        raise InputError(f"initial state has {psi0_amp.size} sites, Q has {M}")
    n0 = np.abs(psi0_amp) ** 2
    if np.any(n0 <= density_floor):
        raise VanishingDensityError(
            f"initial state has a node at site(s) {np.flatnonzero(n0 <= density_floor).tolist()}"
        )
    dt = Q.grid.dt
    n = n0 - cumulative_quad4(Q.current.sum(axis=2), dt)
    if np.any(n <= density_floor):
        k, i = np.unravel_index(np.argmin(n), n.shape)
        raise VanishingDensityError(
            f"density on site {i} reaches {n[k, i]:.3g} at t={Q.grid.times[k]:.6g}"
        )
    phases = np.angle(psi0_amp) + _cumulative_phase(Q.grid.times, Q.kinetic.sum(axis=2), n)
    states = np.sqrt(n) * np.exp(1j * phases)
    iu = np.triu_indices(M, 1)
    T = np.zeros_like(Q.values)
    T[:, iu[0], iu[1]] = Q.values[:, iu[0], iu[1]] / (
        2.0 * np.conj(states[:, iu[0]]) * states[:, iu[1]]
    )
    return LatticeReconstruction(HoppingSignal(Q.grid, _mirror_upper(T)), states, n, phases)


@dataclass(frozen=True)
class RepresentabilityReport:
    """Links and times where ``|Q_ij|^2`` exceeds ``4 T0^2 n_i n_j``."""

    violations: tuple[tuple[int, int, float, float], ...]

    @property
    def representable(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.representable

    def require(self) -> None:
        """Raise :class:`RepresentabilityError` if any link violates the bound."""
        if self.violations:
            i, j, t, excess = self.violations[0]
            raise RepresentabilityError(
                f"|Q|^2 exceeds 4 T0^2 n_i n_j on {len(self.violations)} (link, time) samples; "
                f"first at link ({i}, {j}), t={t:.6g}, excess {excess:.3g}"
            )


def check_representability(
    Q: ComplexCurrent,
    densities: np.ndarray,
    T0: float,
    margin: float = 1e-12,
) -> RepresentabilityReport:
    """Flag every ``(i, j, t)`` with ``|Q_ij|^2 > 4 T0^2 n_i n_j + margin``.

    Each violation is ``(i, j, t, excess)`` with zero-based site indices.
    """
    n = np.asarray(densities, dtype=np.float64)
    if n.shape != Q.values.shape[:2]:
        raise InputError(f"densities shape {n.shape} does not match Q {Q.values.shape[:2]}")
    if np.any(n < 0):
        raise InputError("densities must be nonnegative")
    bound = 4.0 * T0**2 * n[:, :, None] * n[:, None, :]
    excess = np.abs(Q.values) ** 2 - bound
    iu = np.triu_indices(Q.n_sites, 1)
    k, link = np.nonzero(excess[:, iu[0], iu[1]] > margin)
    times = Q.grid.times
    found = tuple(
        (int(iu[0][l]), int(iu[1][l]), float(times[kk]), float(excess[kk, iu[0][l], iu[1][l]]))
        for kk, l in zip(k, link)
    )
    return RepresentabilityReport(found)
