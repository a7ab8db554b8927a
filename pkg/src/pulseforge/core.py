"""Time grids, trajectory containers and the quadrature/differencing primitives
shared by every reconstruction map.

All containers are frozen dataclasses holding read-only numpy arrays, so a
value built once can be handed to any number of concurrent evaluations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt

from .errors import InputError

__all__ = [
    "DENSITY_FLOOR",
    "TimeGrid",
    "TimeSeries",
    "SpatialGrid",
    "LatticeWavefunction",
    "GridWavefunction1D",
    "SpaceTimeField1D",
    "ObservableTrajectory",
    "trapezoid_integrate",
    "central_diff",
    "cumulative_trapezoid",
    "cumulative_quad4",
    "diff2",
    "diff4",
    "piecewise_diff4",
]

#: Densities at or below this value abort the inverse maps (they divide by n).
DENSITY_FLOOR = 1e-12

ArrayF = npt.NDArray[np.float64]
ArrayC = npt.NDArray[np.complex128]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _require_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise InputError(f"{what} contains non-finite samples")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling ``t_k = t_start + k*dt`` for ``k = 0..n_steps``."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self) -> None:
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise InputError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)):
            raise InputError("grid end points must be finite")
        if not self.t_end > self.t_start:
            raise InputError(
                f"t_end ({self.t_end}) must exceed t_start ({self.t_start})"
            )
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))

    @classmethod
    def from_dt(cls, t_start: float, t_end: float, dt: float) -> "TimeGrid":
        """Grid with spacing ``dt``; the span must be an integer multiple of it."""
        if not dt > 0:
            raise InputError(f"dt must be positive, got {dt}")
        steps = (t_end - t_start) / dt
        n = int(round(steps))
        if abs(steps - n) > 1e-6 * max(1.0, steps):
            raise InputError(f"span {t_end - t_start} is not a multiple of dt={dt}")
        return cls(t_start, t_end, n)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def times(self) -> ArrayF:
        # linspace pins the last sample to t_end exactly
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)

    def __len__(self) -> int:
        return self.n_steps + 1

    def index_of(self, t: float) -> int:
        """Index of the grid sample closest to ``t``."""
        k = int(round((t - self.t_start) / self.dt))
        if k < 0 or k > self.n_steps:
            raise InputError(f"t={t} lies outside [{self.t_start}, {self.t_end}]")
        return k

    def as_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "n_steps": self.n_steps}


@dataclass(frozen=True)
class TimeSeries:
    """Samples on a :class:`TimeGrid`; the leading axis indexes time."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim == 0 or values.shape[0] != len(self.grid):
            raise InputError(
                f"expected {len(self.grid)} samples along axis 0, got shape {values.shape}"
            )
        _require_finite(values, "time series")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def times(self) -> ArrayF:
        return self.grid.times


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform 1D spatial mesh including both wall nodes."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self) -> None:
        if int(self.n_points) != self.n_points or self.n_points < 5:
            raise InputError(f"n_points must be an integer >= 5, got {self.n_points!r}")
        if not self.x_max > self.x_min:
            raise InputError("x_max must exceed x_min")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> ArrayF:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def mid_index(self) -> int:
        return (self.n_points - 1) // 2

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Trapezoid integral over x (last axis)."""
        return np.trapezoid(f, dx=self.dx, axis=-1)


@dataclass(frozen=True)
class LatticeWavefunction:
    """Normalized complex amplitudes on ``M >= 2`` lattice sites."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        psi = np.asarray(self.amplitudes, dtype=np.complex128)
        if psi.ndim != 1 or psi.size < 2:
            raise InputError(f"lattice state needs M >= 2 sites, got shape {psi.shape}")
        _require_finite(psi, "lattice state")
        norm = float(np.sum(np.abs(psi) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise InputError(f"lattice state is not normalized (norm {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(psi))

    @classmethod
    def normalized(cls, amplitudes: Sequence[complex]) -> "LatticeWavefunction":
        psi = np.asarray(amplitudes, dtype=np.complex128)
        return cls(psi / np.linalg.norm(psi))

    @property
    def n_sites(self) -> int:
        return self.amplitudes.size

    @property
    def densities(self) -> ArrayF:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class GridWavefunction1D:
    """Wavefunction sampled on a :class:`SpatialGrid` with hard walls."""

    grid: SpatialGrid
    amplitudes: np.ndarray
    mass: float = 1.0
    norm_tol: float = field(default=1e-10, repr=False)

    def __post_init__(self) -> None:
        psi = np.asarray(self.amplitudes, dtype=np.complex128)
        if psi.shape != (self.grid.n_points,):
            raise InputError(
                f"expected {self.grid.n_points} amplitudes, got shape {psi.shape}"
            )
        if not self.mass > 0:
            raise InputError("mass must be positive")
        _require_finite(psi, "grid wavefunction")
        norm = float(self.grid.integrate(np.abs(psi) ** 2))
        if abs(norm - 1.0) > self.norm_tol:
            raise InputError(f"grid wavefunction is not normalized (norm {norm!r})")
        if max(abs(psi[0]), abs(psi[-1])) > 1e-8:
            raise InputError("grid wavefunction must vanish at both walls")
        object.__setattr__(self, "amplitudes", _frozen(psi))

    @classmethod
    def normalized(
        cls, grid: SpatialGrid, amplitudes: np.ndarray, mass: float = 1.0
    ) -> "GridWavefunction1D":
        psi = np.asarray(amplitudes, dtype=np.complex128).copy()
        psi[0] = psi[-1] = 0.0
        psi /= np.sqrt(grid.integrate(np.abs(psi) ** 2))
        return cls(grid, psi, mass)

    @property
    def density(self) -> ArrayF:
        return np.abs(self.amplitudes) ** 2


# --------------------------------------------------------------------------
# array-level primitives


def cumulative_trapezoid(values: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Running trapezoid integral along ``axis`` with zero initial value."""
    v = np.moveaxis(np.asarray(values), axis, 0)
    out = np.zeros_like(v, dtype=np.result_type(v, np.float64))
    # scale once after summing: exact for constant integrands on any grid
    np.cumsum(0.5 * (v[1:] + v[:-1]), axis=0, out=out[1:])
    out[1:] *= dt
    return np.moveaxis(out, 0, axis)


_Q4_EDGE = np.array([9.0, 19.0, -5.0, 1.0]) / 24.0
_Q4_INNER = np.array([-1.0, 13.0, 13.0, -1.0]) / 24.0


def cumulative_quad4(values: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Running fourth-order integral along ``axis`` with zero initial value.

    Each interval is integrated exactly for the cubic through its four nearest
    samples (one-sided at the ends). Falls back to the trapezoid rule below
    four samples.
    """
    v = np.moveaxis(np.asarray(values), axis, 0)
    if v.shape[0] < 4:
        return cumulative_trapezoid(values, dt, axis)
    steps = np.empty_like(v[1:], dtype=np.result_type(v, np.float64))
    steps[0] = np.tensordot(_Q4_EDGE, v[:4], axes=1)
    steps[-1] = np.tensordot(_Q4_EDGE, v[::-1][:4], axes=1)
    steps[1:-1] = _Q4_INNER[0] * (v[:-3] + v[3:]) + _Q4_INNER[1] * (v[1:-2] + v[2:-1])
    out = np.zeros_like(v, dtype=steps.dtype)
    np.cumsum(steps, axis=0, out=out[1:])
    out[1:] *= dt
    return np.moveaxis(out, 0, axis)


def diff2(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second-order central difference, one-sided second order at the ends."""
    v = np.asarray(values)
    if v.shape[axis] < 3:
        raise InputError("central differences need at least three samples")
    return np.gradient(v, h, axis=axis, edge_order=2)


_D4_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D4_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def diff4(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order finite difference (five-point stencils, one-sided at the ends)."""
    v = np.moveaxis(np.asarray(values), axis, 0)
    if v.shape[0] < 5:
        raise InputError("fourth-order differences need at least five samples")
    out = np.empty_like(v, dtype=np.result_type(v, np.float64))
    out[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)
    head, tail = v[:5], v[::-1][:5]
    out[0] = np.tensordot(_D4_EDGE0, head, axes=1) / h
    out[1] = np.tensordot(_D4_EDGE1, head, axes=1) / h
    out[-1] = -np.tensordot(_D4_EDGE0, tail, axes=1) / h
    out[-2] = -np.tensordot(_D4_EDGE1, tail, axes=1) / h
    return np.moveaxis(out, 0, axis)


def piecewise_diff4(values: np.ndarray, h: float, breaks: Sequence[int] = ()) -> np.ndarray:
    """:func:`diff4` along axis 0, restarted at each index in ``breaks``.

    Use at samples where the underlying function has a kink, so stencils never
    straddle it. The break sample itself takes the right-hand derivative.
    """
    v = np.asarray(values)
    cuts = [0, *sorted(int(b) for b in breaks if 0 < b < v.shape[0] - 1), v.shape[0] - 1]
    out = np.empty_like(v, dtype=np.result_type(v, np.float64))
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        out[lo : hi + 1] = diff4(v[lo : hi + 1], h)
    return out


# --------------------------------------------------------------------------
# TimeSeries operations


def trapezoid_integrate(series: TimeSeries) -> TimeSeries:
    """Running integral ``F(t_k) = int_{t_0}^{t_k} f dt`` by the trapezoid rule."""
    return TimeSeries(series.grid, cumulative_trapezoid(series.values, series.grid.dt))


def central_diff(series: TimeSeries) -> TimeSeries:
    """Time derivative: central in the interior, one-sided second order at the ends."""
    return TimeSeries(series.grid, diff2(series.values, series.grid.dt))


@dataclass(frozen=True)
class SpaceTimeField1D:
    """Real or complex samples on ``time x space``; shape ``(len(time), n_points)``."""

    space: SpatialGrid
    time: TimeGrid
    values: np.ndarray
    mass: float = 1.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        expected = (len(self.time), self.space.n_points)
        if values.shape != expected:
            raise InputError(f"field shape {values.shape} != {expected}")
        _require_finite(values, "space-time field")
        if not self.mass > 0:
            raise InputError("mass must be positive")
        object.__setattr__(self, "values", _frozen(values))

    def with_values(self, values: np.ndarray) -> "SpaceTimeField1D":
        return SpaceTimeField1D(self.space, self.time, values, self.mass)


@dataclass(frozen=True)
class ObservableTrajectory:
    """Prescribed observable to be reproduced by forward propagation.

    ``kind`` is one of ``"site-densities"`` (values ``(n_t, M)``), ``"bloch"``
    (values ``(n_t, 2)`` holding theta, phi) or ``"grid-density"`` (values
    ``(n_t, n_points)``, requires ``space``). ``final_state`` is the state the
    drive should end in (up to a global phase) and ``checkpoints`` are times at
    which the propagated state should be an instantaneous ground state.
    """

    grid: TimeGrid
    kind: str
    values: np.ndarray
    final_state: np.ndarray | None = None
    checkpoints: tuple[float, ...] = ()
    space: SpatialGrid | None = None

    KINDS = ("site-densities", "bloch", "grid-density")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise InputError(f"unknown observable kind {self.kind!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != len(self.grid):
            raise InputError(f"observable samples have shape {values.shape}")
        if self.kind == "grid-density" and self.space is None:
            raise InputError("grid-density observables need a spatial grid")
        _require_finite(values, "observable")
        object.__setattr__(self, "values", _frozen(values))
        if self.final_state is not None:
            object.__setattr__(
                self, "final_state", _frozen(np.asarray(self.final_state, np.complex128))
            )
        object.__setattr__(self, "checkpoints", tuple(float(c) for c in self.checkpoints))
