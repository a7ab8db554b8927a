"""Forward Schrödinger propagation: the independent oracle for every reconstruction.

Nothing here imports the inverse maps. A reconstruction is certified by
handing only its control signal and initial state to :func:`verify_reconstruction`.

Lattice dynamics use the fourth-order Magnus integrator (two Gauss-Legendre
nodes plus the commutator term) with an exact exponential of the small dense
generator. Grid dynamics use Crank-Nicolson with the potential sampled at the
half step and Dirichlet walls.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import kernels
from .core import (
    GridWavefunction1D,
    LatticeWavefunction,
    ObservableTrajectory,
    SpaceTimeField1D,
    SpatialGrid,
    TimeGrid,
)
from .errors import InputError

__all__ = [
    "LatticeHamiltonianSignal",
    "LatticeTrajectory",
    "GridTrajectory",
    "VerificationReport",
    "Thresholds",
    "propagate_lattice",
    "propagate_grid_1d",
    "ground_state_lattice",
    "fidelity",
    "chain_hamiltonian",
    "verify_reconstruction",
]

HamiltonianFn = Callable[[np.ndarray], np.ndarray]

_GAUSS_OFFSET = np.sqrt(3.0) / 6.0
_CHUNK = 4096


def _hermiticity_gap(H: np.ndarray) -> float:
    return float(np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2)))))


def chain_hamiltonian(T0: float, v: np.ndarray) -> np.ndarray:
    """Open-chain Hamiltonian(s) ``-T0 (nearest-neighbour hops) + diag(v)``.

    ``v`` has shape ``(..., M)``; the result has shape ``(..., M, M)``.
    """
    v = np.asarray(v, dtype=np.float64)
    M = v.shape[-1]
    hop = np.zeros((M, M))
    idx = np.arange(M - 1)
    hop[idx, idx + 1] = hop[idx + 1, idx] = -T0
    H = np.broadcast_to(hop, v.shape + (M,)).astype(np.complex128)
    H[..., np.arange(M), np.arange(M)] += v
    return H


@dataclass(frozen=True)
class LatticeHamiltonianSignal:
    """Lattice Hamiltonian sampled on a time grid, optionally with a closed form.

    ``matrices`` has shape ``(n_steps + 1, M, M)``. When ``hamiltonian_at`` is
    given (vectorized: times of shape ``(k,)`` -> ``(k, M, M)``) the propagator
    evaluates it at the Gauss nodes; otherwise it interpolates the samples with
    four-point Lagrange polynomials.
    """

    grid: TimeGrid
    matrices: np.ndarray
    hamiltonian_at: HamiltonianFn | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        H = np.asarray(self.matrices, dtype=np.complex128)
        if H.ndim != 3 or H.shape[0] != len(self.grid) or H.shape[1] != H.shape[2]:
            raise InputError(f"Hamiltonian samples have shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise InputError("Hamiltonian contains non-finite entries")
        scale = max(1.0, float(np.max(np.abs(H))))
        if _hermiticity_gap(H) > 1e-12 * scale:
            raise InputError("Hamiltonian is not Hermitian")
        H = H.copy()
        H.setflags(write=False)
        object.__setattr__(self, "matrices", H)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @classmethod
    def from_hoppings(
        cls,
        grid: TimeGrid,
        hoppings: np.ndarray,
        hoppings_at: HamiltonianFn | None = None,
    ) -> "LatticeHamiltonianSignal":
        """``H_ij = -T_ij`` for complex hoppings ``T`` with ``T_ii = 0``."""
        T = np.asarray(hoppings, dtype=np.complex128)
        fn = None if hoppings_at is None else (lambda t: -np.asarray(hoppings_at(t)))
        return cls(grid, -T, fn)

    @classmethod
    def from_onsite(
        cls,
        grid: TimeGrid,
        T0: float,
        potentials: np.ndarray,
        potentials_at: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> "LatticeHamiltonianSignal":
        """Open chain with fixed real hopping ``T0`` and on-site potentials ``v_i(t)``."""
        fn = None
        if potentials_at is not None:
            fn = lambda t: chain_hamiltonian(T0, potentials_at(t))  # noqa: E731
        return cls(grid, chain_hamiltonian(T0, potentials), fn)

    @classmethod
    def from_field(
        cls,
        grid: TimeGrid,
        bx: np.ndarray,
        by: np.ndarray,
        field_at: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
    ) -> "LatticeHamiltonianSignal":
        """Spin-1/2 in an in-plane field: ``H = -(Bx Sx + By Sy)``."""

        def build(bx: np.ndarray, by: np.ndarray) -> np.ndarray:
            bx = np.asarray(bx, dtype=np.float64)
            by = np.asarray(by, dtype=np.float64)
            H = np.zeros(bx.shape + (2, 2), dtype=np.complex128)
            H[..., 0, 1] = -0.5 * (bx - 1j * by)
            H[..., 1, 0] = -0.5 * (bx + 1j * by)
            return H

        fn = None
        if field_at is not None:
            fn = lambda t: build(*field_at(t))  # noqa: E731
        return cls(grid, build(bx, by), fn)

    def at(self, times: np.ndarray) -> np.ndarray:
        """Hamiltonians at arbitrary times inside the grid."""
        times = np.asarray(times, dtype=np.float64)
        if self.hamiltonian_at is not None:
            return np.asarray(self.hamiltonian_at(times), dtype=np.complex128)
        g = self.grid
        n = g.n_steps
        s = (times - g.t_start) / g.dt
        k = np.clip(np.floor(s).astype(int), 1, max(1, n - 2))
        if n < 3:
            k = np.zeros_like(k)
        u = s - k
        nodes = np.array([-1.0, 0.0, 1.0, 2.0])
        # four-point Lagrange weights on nodes k-1 .. k+2
        w = np.ones((u.size, 4))
        for a in range(4):
            for b in range(4):
                if a != b:
                    w[:, a] *= (u - nodes[b]) / (nodes[a] - nodes[b])
        idx = np.clip(k[:, None] + np.arange(-1, 3), 0, n)
        return np.einsum("ka,kaij->kij", w, self.matrices[idx])


@dataclass(frozen=True)
class LatticeTrajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def densities(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class GridTrajectory:
    space: SpatialGrid
    times: np.ndarray
    states: np.ndarray

    @property
    def densities(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return self.space.integrate(self.densities)


def _expm_herm(G: np.ndarray) -> np.ndarray:
    """``exp(-i G)`` for a stack of Hermitian matrices."""
    w, V = np.linalg.eigh(G)
    return np.einsum("kij,kj,klj->kil", V, np.exp(-1j * w), V.conj())


def _magnus4_unitaries(signal: LatticeHamiltonianSignal, starts: np.ndarray, h: float) -> np.ndarray:
    H1 = signal.at(starts + h * (0.5 - _GAUSS_OFFSET))
    H2 = signal.at(starts + h * (0.5 + _GAUSS_OFFSET))
    comm = H2 @ H1 - H1 @ H2
    G = 0.5 * h * (H1 + H2) - 1j * (np.sqrt(3.0) * h * h / 12.0) * comm
    G = 0.5 * (G + np.conj(np.swapaxes(G, -1, -2)))
    return _expm_herm(G)


def _output_indices(n_steps: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise InputError("stride must be >= 1")
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def propagate_lattice(
    signal: LatticeHamiltonianSignal,
    psi0: LatticeWavefunction | np.ndarray,
    substeps: int = 2,
    stride: int = 1,
) -> LatticeTrajectory:
    """Propagate ``psi0`` through ``signal``; states are kept every ``stride`` grid steps.

    Each grid interval is split into ``substeps`` fourth-order Magnus steps.
    """
    psi = np.asarray(getattr(psi0, "amplitudes", psi0), dtype=np.complex128)
    if psi.shape != (signal.dim,):
        raise InputError(f"state of shape {psi.shape} does not match dimension {signal.dim}")
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
        raise InputError("initial state is not normalized")
    if substeps < 1:
        raise InputError("substeps must be >= 1")
    g = signal.grid
    h = g.dt / substeps
    keep = _output_indices(g.n_steps, stride)
    states = np.empty((keep.size, signal.dim), dtype=np.complex128)
    states[0] = psi
    grid_times = g.times
    row = 1
    per_chunk = max(1, _CHUNK // substeps)
    for k0 in range(0, g.n_steps, per_chunk):
        k1 = min(g.n_steps, k0 + per_chunk)
        starts = (grid_times[k0:k1, None] + h * np.arange(substeps)).ravel()
        U = np.ascontiguousarray(_magnus4_unitaries(signal, starts, h))
        traj = kernels.apply_unitaries(U, np.ascontiguousarray(psi))
        psi = traj[-1].copy()
        while row < keep.size and keep[row] <= k1:
            states[row] = traj[(keep[row] - k0) * substeps]
            row += 1
    return LatticeTrajectory(grid_times[keep], states)


PotentialFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def propagate_grid_1d(
    potential: SpaceTimeField1D | PotentialFn,
    psi0: GridWavefunction1D,
    grid: TimeGrid | None = None,
    stride: int = 1,
) -> GridTrajectory:
    """Crank-Nicolson propagation of ``psi0`` on its spatial grid.

    ``potential`` is either sampled on a time grid (half-step values are the
    average of neighbouring samples) or a callable ``V(x, t)`` broadcasting
    ``x[None, :]`` against ``t[:, None]``, in which case ``grid`` is required.
    """
    space = psi0.grid
    x = space.x
    if isinstance(potential, SpaceTimeField1D):
        if potential.space != space:
            raise InputError("potential and wavefunction live on different grids")
        if grid is not None and grid != potential.time:
            raise InputError("explicit time grid disagrees with the potential's grid")
        grid = potential.time
        V = np.asarray(potential.values, dtype=np.float64)
        v_mid = 0.5 * (V[1:] + V[:-1])
    else:
        if grid is None:
            raise InputError("a time grid is required for callable potentials")
        t_mid = grid.times[:-1] + 0.5 * grid.dt
        v_mid = np.asarray(potential(x[None, :], t_mid[:, None]), dtype=np.float64)
        v_mid = np.broadcast_to(v_mid, (grid.n_steps, space.n_points))
    if not np.all(np.isfinite(v_mid)):
        raise InputError("potential contains non-finite samples")
    keep = _output_indices(grid.n_steps, stride)
    save = np.zeros(grid.n_steps, dtype=np.uint8)
    save[keep[1:] - 1] = 1
    out = np.empty((keep.size, space.n_points), dtype=np.complex128)
    out[0] = psi0.amplitudes
    kernels.cn_propagate(
        np.ascontiguousarray(v_mid),
        np.ascontiguousarray(psi0.amplitudes),
        space.dx,
        grid.dt,
        psi0.mass,
        save,
        out,
    )
    return GridTrajectory(space, grid.times[keep], out)


def ground_state_lattice(H: np.ndarray) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of a Hermitian matrix.

    The state is normalized with its first non-negligible component real and
    positive. A degenerate ground level triggers a warning; the eigenvector
    returned first by the solver is kept.
    """
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InputError("Hamiltonian must be a square matrix")
    if _hermiticity_gap(H) > 1e-12 * max(1.0, float(np.max(np.abs(H)))):
        raise InputError("Hamiltonian is not Hermitian")
    w, V = np.linalg.eigh(H)
    if w.size > 1 and w[1] - w[0] < 1e-10 * max(1.0, abs(w[0])):
        warnings.warn("ground level is degenerate; returning the lowest-index eigenvector")
    psi = V[:, 0]
    lead = np.flatnonzero(np.abs(psi) > 1e-12)[0]
    psi = psi * np.exp(-1j * np.angle(psi[lead]))
    return float(w[0]), psi / np.linalg.norm(psi)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """``|<a|b>|^2 / (<a|a> <b|b>)``: the overlap of the rays through ``a`` and ``b``.

    Dividing by the norms keeps the result in ``[0, 1]`` when the inputs carry
    round-off norm drift.
    """
    a = np.asarray(getattr(a, "amplitudes", a), dtype=np.complex128)
    b = np.asarray(getattr(b, "amplitudes", b), dtype=np.complex128)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(min(1.0, abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)))


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class Thresholds:
    """Pass criteria for a :class:`VerificationReport`; ``None`` skips a check."""

    max_density_error: float | None = None
    min_fidelity: float | None = None
    max_norm_drift: float | None = 1e-10
    min_checkpoint_overlap: float | None = None
    expected_phase: float | None = None
    phase_tol: float = 1e-4


@dataclass(frozen=True)
class VerificationReport:
    """Forward-propagation error metrics for one reconstruction.

    ``max_density_error`` is the max absolute site-density error for lattice
    targets and the max-over-time spatial L2 norm of the density error for grid
    targets. ``final_fidelity`` is measured against the target's final state
    when one is given, else against the instantaneous ground state at the end.
    """

    max_density_error: float
    final_fidelity: float
    norm_drift: float
    residual_norm: float
    checkpoint_overlaps: tuple[tuple[float, float], ...] = ()
    final_phase: float | None = None
    checks: Mapping[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self) -> dict:
        return {
            "max_density_error": self.max_density_error,
            "final_fidelity": self.final_fidelity,
            "norm_drift": self.norm_drift,
            "residual_norm": self.residual_norm,
            "checkpoint_overlaps": [list(c) for c in self.checkpoint_overlaps],
            "final_phase": self.final_phase,
            "checks": dict(self.checks),
            "passed": self.passed,
        }


def _evaluate(metrics: dict, thresholds: Thresholds) -> dict[str, bool]:
    checks: dict[str, bool] = {}
    t = thresholds
    if t.max_density_error is not None:
        checks["density"] = bool(metrics["max_density_error"] <= t.max_density_error)
    if t.min_fidelity is not None:
        checks["fidelity"] = bool(metrics["final_fidelity"] >= t.min_fidelity)
    if t.max_norm_drift is not None:
        checks["norm"] = bool(metrics["norm_drift"] <= t.max_norm_drift)
    if t.min_checkpoint_overlap is not None:
        checks["ground_state"] = all(
            ov >= t.min_checkpoint_overlap for _, ov in metrics["checkpoint_overlaps"]
        )
    if t.expected_phase is not None:
        phase = metrics.get("final_phase")
        if phase is None:
            checks["phase"] = False
        else:
            gap = np.angle(np.exp(1j * (phase - t.expected_phase)))
            checks["phase"] = bool(abs(gap) <= t.phase_tol)
    return checks


def _lattice_residual(signal: LatticeHamiltonianSignal, traj: LatticeTrajectory) -> float:
    psi = traj.states
    if psi.shape[0] < 3:
        return 0.0
    dt = traj.times[1] - traj.times[0]
    H = signal.at(traj.times[1:-1])
    r = 1j * (psi[2:] - psi[:-2]) / (2 * dt) - np.einsum("kij,kj->ki", H, psi[1:-1])
    return float(np.max(np.linalg.norm(r, axis=1)))


def _verify_lattice(
    signal: LatticeHamiltonianSignal,
    target: ObservableTrajectory,
    psi0: np.ndarray,
    thresholds: Thresholds,
    substeps: int,
) -> VerificationReport:
    traj = propagate_lattice(signal, psi0, substeps=substeps)
    psi = traj.states
    if target.kind == "site-densities":
        observed = np.abs(psi) ** 2
        expected = target.values
    elif target.kind == "bloch":
        if signal.dim != 2:
            raise InputError("Bloch targets need a two-level signal")
        observed = np.abs(psi[:, :1]) ** 2
        expected = np.cos(0.5 * target.values[:, :1]) ** 2
    else:
        raise InputError(f"{target.kind} target cannot be checked on a lattice")
    if observed.shape != expected.shape:
        raise InputError("target and signal disagree in shape")
    max_err = float(np.max(np.abs(observed - expected)))
    norms = np.sum(np.abs(psi) ** 2, axis=1)
    drift = float(np.max(np.abs(norms - 1.0)))

    overlaps = []
    for tc in target.checkpoints:
        k = signal.grid.index_of(tc)
        _, gs = ground_state_lattice(signal.at(np.array([signal.grid.times[k]]))[0])
        overlaps.append((float(signal.grid.times[k]), fidelity(gs, psi[k])))

    phase = None
    if target.final_state is not None:
        fid = fidelity(target.final_state, psi[-1])
        phase = float(np.angle(np.vdot(target.final_state, psi[-1])))
    else:
        _, gs = ground_state_lattice(signal.at(np.array([signal.grid.t_end]))[0])
        fid = fidelity(gs, psi[-1])
    metrics = {
        "max_density_error": max_err,
        "final_fidelity": fid,
        "norm_drift": drift,
        "residual_norm": _lattice_residual(signal, traj),
        "checkpoint_overlaps": tuple(overlaps),
        "final_phase": phase,
    }
    return VerificationReport(**metrics, checks=_evaluate(metrics, thresholds))


def _verify_grid(
    potential: SpaceTimeField1D | PotentialFn,
    target: ObservableTrajectory,
    psi0: GridWavefunction1D,
    thresholds: Thresholds,
    stride: int,
) -> VerificationReport:
    if target.kind != "grid-density":
        raise InputError(f"{target.kind} target cannot be checked on a spatial grid")
    traj = propagate_grid_1d(potential, psi0, grid=target.grid, stride=stride)
    keep = _output_indices(target.grid.n_steps, stride)
    diff = traj.densities - target.values[keep]
    l2 = np.sqrt(psi0.grid.integrate(diff**2))
    norms = traj.norms()
    fid = float("nan")
    phase = None
    if target.final_state is not None:
        g = psi0.grid
        ref = np.asarray(target.final_state, dtype=np.complex128)
        overlap = g.integrate(np.conj(ref) * traj.final)
        scale = g.integrate(np.abs(ref) ** 2) * g.integrate(np.abs(traj.final) ** 2)
        fid = float(min(1.0, abs(overlap) ** 2 / scale))
        phase = float(np.angle(overlap))
    metrics = {
        "max_density_error": float(np.max(l2)),
        "final_fidelity": fid if np.isfinite(fid) else 0.0,
        "norm_drift": float(np.max(np.abs(norms - 1.0))),
        "residual_norm": 0.0,
        "checkpoint_overlaps": (),
        "final_phase": phase,
    }
    checks = _evaluate(metrics, thresholds)
    if target.final_state is None:
        checks.pop("fidelity", None)
    return VerificationReport(**metrics, checks=checks)


def verify_reconstruction(
    signal: LatticeHamiltonianSignal | SpaceTimeField1D | PotentialFn,
    target: ObservableTrajectory,
    psi0: LatticeWavefunction | GridWavefunction1D | np.ndarray,
    thresholds: Thresholds | None = None,
    *,
    substeps: int = 2,
    stride: int = 1,
) -> VerificationReport:
    """Propagate ``psi0`` under ``signal`` and compare with ``target``.

    Uses only the control signal and the initial state; reconstructed
    wavefunctions never enter.
    """
    thresholds = thresholds or Thresholds()
    if isinstance(signal, LatticeHamiltonianSignal):
        if signal.grid != target.grid:
            raise InputError("signal and target must share a time grid")
        psi = np.asarray(getattr(psi0, "amplitudes", psi0), dtype=np.complex128)
        return _verify_lattice(signal, target, psi, thresholds, substeps)
    if not isinstance(psi0, GridWavefunction1D):
        raise InputError("grid verification needs a GridWavefunction1D initial state")
    return _verify_grid(signal, target, psi0, thresholds, stride)
