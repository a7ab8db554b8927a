"""Reproducible scenarios: configuration, reconstruction, verification, artifacts.

Each runner builds a target observable, reconstructs the drive, certifies it
with the forward propagator and returns a :class:`ScenarioResult` holding the
tables to export and the report. Nothing here touches the file system except
:func:`write_artifacts`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, kernels
from .chain_control import ChainSpec, onsite_potential, two_stage_density
from .core import (
    GridWavefunction1D,
    LatticeWavefunction,
    ObservableTrajectory,
    SpaceTimeField1D,
    SpatialGrid,
    TimeGrid,
)
from .errors import InputError
from .io import ChannelTable, export_table, load_schema, write_json
from .lattice_map import ComplexCurrent, observable_from_state, reconstruct_hopping
from .propagator import (
    LatticeHamiltonianSignal,
    Thresholds,
    propagate_grid_1d,
    propagate_lattice,
    verify_reconstruction,
)
from .realspace_control import (
    ScalingProgram,
    harmonic_ground_state,
    oscillator_parameters,
    scaling_solution,
)
from .spin_control import KET_LEFT, KET_RIGHT, bloch_state, not_gate_pulse

__all__ = [
    "SCENARIOS",
    "ScenarioConfig",
    "ScenarioResult",
    "run_scenario",
    "write_artifacts",
    "random_smooth_hoppings",
    "table_to_signal",
    "table_to_target",
    "table_to_state",
]

SCENARIOS = ("chain-reshape", "spin-not", "oscillator-scaling", "lattice-roundtrip")

_DEFAULT_THRESHOLDS: dict[str, dict[str, float]] = {
    "chain-reshape": {
        "max_density_error": 1e-5,
        "min_checkpoint_overlap": 1.0 - 1e-6,
        "max_norm_drift": 1e-10,
        "max_potential_error": 1e-6,
    },
    "spin-not": {"min_fidelity": 1.0 - 1e-6, "phase_tol": 1e-4, "max_norm_drift": 1e-10},
    "oscillator-scaling": {
        "max_density_error": 1e-3,
        "max_wavefunction_error": 1e-3,
        "max_norm_drift": 1e-10,
        "max_newton_residual": 1e-12,
    },
    "lattice-roundtrip": {
        "max_hopping_error": 1e-6,
        "max_density_error": 1e-6,
        "max_norm_drift": 1e-10,
    },
}


@dataclass(frozen=True)
class ScenarioConfig:
    """All knobs of the shipped scenarios; unused fields are ignored per scenario.

    ``max_norm_drift`` thresholds are per unit time and scaled by the duration.
    """

    scenario: str
    M: int = 11
    T0: float = 1.0
    t1: float = 3.0
    t2: float = 12.0
    B0: float = 1.0
    tau: float | None = None
    omega0: float = 1.0
    mass: float = 1.0
    stretch: float = 0.5
    shift: float = 1.0
    x_max: float = 12.0
    n_points: int = 512
    sites: int = 4
    seed: int = 0
    t_end: float = 1.0
    dt: float | None = None
    substeps: int = 2
    export_stride: int | None = None
    format: str = "csv"
    out: str | None = None
    emit_plot_data: bool = False
    thresholds: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise InputError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.tau is None:
            object.__setattr__(self, "tau", 12.0 if self.scenario == "spin-not" else 5.0)
        if self.dt is None:
            defaults = {"spin-not": self.tau * 1e-5, "lattice-roundtrip": 1e-4}
            object.__setattr__(self, "dt", defaults.get(self.scenario, 1e-3))
        merged = dict(_DEFAULT_THRESHOLDS[self.scenario])
        merged.update(self.thresholds)
        object.__setattr__(self, "thresholds", merged)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ScenarioConfig":
        """Validate ``doc`` against the config schema and build a config."""
        import jsonschema

        try:
            jsonschema.validate(doc, load_schema("config"))
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise InputError(f"invalid config at {where}: {exc.message}") from None
        return cls(**doc)

    def merged(self, overrides: dict[str, Any]) -> "ScenarioConfig":
        """Copy with ``overrides`` applied (``None`` values are skipped)."""
        known = {f.name for f in fields(self)}
        changes = {k: v for k, v in overrides.items() if v is not None and k in known}
        if "thresholds" in changes:
            changes["thresholds"] = {**self.thresholds, **changes["thresholds"]}
        doc = {k: v for k, v in asdict(self).items()}
        doc.update(changes)
        return ScenarioConfig.from_dict({k: v for k, v in doc.items() if v is not None})

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class ScenarioResult:
    """Tables to export, the report and the pass/fail verdict."""

    config: ScenarioConfig
    tables: dict[str, ChannelTable]
    report: dict[str, Any]
    plots: dict[str, ChannelTable] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.report["passed"])


def _thresholds(cfg: ScenarioConfig, duration: float, **extra: Any) -> Thresholds:
    th = cfg.thresholds
    return Thresholds(
        max_density_error=th.get("max_density_error"),
        min_fidelity=th.get("min_fidelity"),
        max_norm_drift=th["max_norm_drift"] * max(1.0, duration),
        min_checkpoint_overlap=th.get("min_checkpoint_overlap"),
        phase_tol=th.get("phase_tol", 1e-4),
        **extra,
    )


def _finish(cfg: ScenarioConfig, verification: dict, checks: dict, metrics: dict) -> dict:
    all_checks = {**{f"verify.{k}": bool(v) for k, v in verification["checks"].items()}, **checks}
    return {
        "scenario": cfg.scenario,
        "passed": all(all_checks.values()),
        "checks": all_checks,
        "metrics": metrics,
        "verification": verification,
    }


def _stride_for(n_steps: int, target_rows: int) -> int:
    """Largest divisor of ``n_steps`` giving at least ``target_rows`` rows."""
    best = 1
    for s in range(1, n_steps + 1):
        if n_steps % s == 0 and n_steps // s >= target_rows:
            best = s
    return best


def _complex_channels(prefix: str, values: np.ndarray, names: list[str]) -> tuple[list[str], np.ndarray]:
    chans = [f"re_{prefix}{n}" for n in names] + [f"im_{prefix}{n}" for n in names]
    return chans, np.concatenate([values.real, values.imag], axis=-1)


# --------------------------------------------------------------------------
# chain


def _run_chain(cfg: ScenarioConfig) -> ScenarioResult:
    spec = ChainSpec(cfg.M, cfg.T0)
    grid = TimeGrid.from_dt(0.0, cfg.t2, cfg.dt)
    program = two_stage_density(spec, cfg.t1, cfg.t2, grid)
    psi0 = LatticeWavefunction(np.sqrt(program.densities[0]))
    rec = onsite_potential(program, spec, psi0)
    v = rec.potential.values
    signal = LatticeHamiltonianSignal.from_onsite(grid, spec.T0, v, rec.potential.potential_at)
    target = ObservableTrajectory(
        grid, "site-densities", program.densities, checkpoints=(cfg.t1, cfg.t2)
    )
    report = verify_reconstruction(
        signal, target, psi0, _thresholds(cfg, cfg.t2), substeps=cfg.substeps
    )

    k1 = grid.index_of(cfg.t1)
    plateau = v[k1, 1:-1] - v[k1, 0]
    plateau_err = float(np.max(np.abs(plateau - spec.T0))) if spec.M > 2 else 0.0
    edge_gap = float(abs(v[k1, -1] - v[k1, 0]))
    tol = cfg.thresholds["max_potential_error"]
    checks = {
        "initial_potential_zero": bool(np.max(np.abs(v[0])) <= tol),
        "plateau_at_t1": bool(plateau_err <= tol and edge_gap <= tol),
    }
    metrics = {
        "max_abs_initial_potential": float(np.max(np.abs(v[0]))),
        "plateau_error_at_t1": plateau_err,
        "edge_gap_at_t1": edge_gap,
        "dual_path_error": rec.dual_path_error,
        "max_abs_potential": float(np.max(np.abs(v))),
        "min_density": float(program.densities.min()),
    }
    sites = [str(i) for i in range(1, spec.M + 1)]
    meta = {"T0": spec.T0, "M": spec.M}
    pulse = ChannelTable("onsite-potential", grid, tuple(f"v_{s}" for s in sites), v, meta=meta)
    obs = ChannelTable("site-densities", grid, tuple(f"n_{s}" for s in sites), program.densities)
    chans, wf = _complex_channels("psi_", rec.states, sites)
    wave = ChannelTable("lattice-wavefunction", grid, tuple(chans), wf)
    stride = _stride_for(grid.n_steps, 1000)
    plots = {"fig_density": obs.strided(stride), "fig_potential": pulse.strided(stride)}
    return ScenarioResult(
        cfg,
        {"pulse": pulse, "observables": obs, "wavefunction": wave},
        _finish(cfg, report.as_dict(), checks, metrics),
        plots,
    )


# --------------------------------------------------------------------------
# spin


def _run_spin(cfg: ScenarioConfig) -> ScenarioResult:
    tau = float(cfg.tau)
    grid = TimeGrid.from_dt(0.0, tau, cfg.dt)
    gate = not_gate_pulse(cfg.B0, tau, grid)
    p = gate.pulse
    signal = LatticeHamiltonianSignal.from_field(grid, p.bx, p.by, p.field_at)
    tr = gate.trajectory
    bloch = np.stack([tr.theta, tr.phi], axis=1)
    target = ObservableTrajectory(grid, "bloch", bloch, final_state=KET_RIGHT)
    th = _thresholds(cfg, tau, expected_phase=-0.5 * math.pi)
    report = verify_reconstruction(signal, target, KET_LEFT, th, substeps=cfg.substeps)

    back = propagate_lattice(signal, KET_RIGHT, substeps=cfg.substeps, stride=grid.n_steps)
    back_overlap = np.vdot(KET_LEFT, back.final)
    back_fid = float(abs(back_overlap) ** 2)
    checks = {
        "endpoints_exact": bool(
            p.bx[0] == cfg.B0 and p.by[0] == 0.0 and p.bx[-1] == cfg.B0 and p.by[-1] == 0.0
        ),
        "reverse_fidelity": bool(back_fid >= cfg.thresholds["min_fidelity"]),
        "predicted_phase": bool(abs(gate.phase_gain + 0.5 * math.pi) <= cfg.thresholds["phase_tol"]),
    }
    metrics = {
        "B_start": [float(p.bx[0]), float(p.by[0])],
        "B_end": [float(p.bx[-1]), float(p.by[-1])],
        "predicted_phase_gain": gate.phase_gain,
        "measured_phase": report.final_phase,
        "reverse_fidelity": back_fid,
        "reverse_phase": float(np.angle(back_overlap)),
        "max_abs_field": float(np.max(np.hypot(p.bx, p.by))),
    }
    pulse = ChannelTable("field-pulse", grid, ("Bx", "By"), np.stack([p.bx, p.by], 1), meta={"B0": cfg.B0})
    obs = ChannelTable("bloch", grid, ("theta", "phi"), bloch)
    states = bloch_state(tr.theta, tr.phi, gate.beta)
    chans, wf = _complex_channels("psi_", states, ["1", "2"])
    wave = ChannelTable("lattice-wavefunction", grid, tuple(chans), wf)
    stride = _stride_for(grid.n_steps, 1000)
    plots = {"fig_bloch": obs.strided(stride), "fig_field": pulse.strided(stride)}
    return ScenarioResult(
        cfg,
        {"pulse": pulse, "observables": obs, "wavefunction": wave},
        _finish(cfg, report.as_dict(), checks, metrics),
        plots,
    )


# --------------------------------------------------------------------------
# oscillator


def _run_oscillator(cfg: ScenarioConfig) -> ScenarioResult:
    tau = float(cfg.tau)
    prog = ScalingProgram.ramped_harmonic(tau, cfg.stretch, cfg.shift, cfg.omega0, cfg.mass)
    space = SpatialGrid(-cfg.x_max, cfg.x_max, cfg.n_points)
    grid = TimeGrid.from_dt(0.0, tau, cfg.dt)
    osc = oscillator_parameters(prog, grid)
    sol = scaling_solution(prog, space, grid)
    psi0 = harmonic_ground_state(space, cfg.omega0, cfg.mass)
    exact = sol.psi.values
    target = ObservableTrajectory(
        grid, "grid-density", np.abs(exact) ** 2, final_state=exact[-1], space=space
    )
    report = verify_reconstruction(sol.potential_at, target, psi0, _thresholds(cfg, tau))

    stride = cfg.export_stride or _stride_for(grid.n_steps, 100)
    traj = propagate_grid_1d(sol.potential_at, psi0, grid=grid, stride=stride)
    keep = np.arange(0, grid.n_steps + 1, stride)
    wf_err = np.sqrt(space.integrate(np.abs(traj.states - exact[keep]) ** 2))
    newton = float(np.max(np.abs(osc.newton_residual)))
    checks = {
        "wavefunction": bool(np.max(wf_err) <= cfg.thresholds["max_wavefunction_error"]),
        "newton_residual": bool(newton <= cfg.thresholds["max_newton_residual"]),
    }
    metrics = {
        "max_wavefunction_l2_error": float(np.max(wf_err)),
        "final_wavefunction_l2_error": float(wf_err[-1]),
        "max_newton_residual": newton,
        "min_omega2": float(np.min(osc.omega2)),
        "base_state_residual": sol.base_residual,
    }
    coarse = TimeGrid(grid.t_start, grid.t_end, grid.n_steps // stride)
    V = sol.potential.values[keep]
    meta = {"mass": cfg.mass}
    pulse = ChannelTable.from_space_time("scalar-potential", coarse, space, {"V": V}, meta)
    obs = ChannelTable.from_space_time("grid-density", coarse, space, {"n": np.abs(exact[keep]) ** 2}, meta)
    wave = ChannelTable.from_space_time(
        "grid-wavefunction", coarse, space, {"re_psi": exact[keep].real, "im_psi": exact[keep].imag}, meta
    )
    (a, _, _), (r, _, _) = prog.sample(grid.times)
    plot_stride = _stride_for(grid.n_steps, 1000)
    osc_table = ChannelTable(
        "oscillator",
        grid,
        ("alpha", "r0", "omega2", "force"),
        np.stack([a, r, osc.omega2, osc.force], 1),
    )
    return ScenarioResult(
        cfg,
        {"pulse": pulse, "observables": obs, "wavefunction": wave},
        _finish(cfg, report.as_dict(), checks, metrics),
        {"fig_oscillator": osc_table.strided(plot_stride)},
    )


# --------------------------------------------------------------------------
# lattice round trip


def random_smooth_hoppings(
    M: int, seed: int, amplitude: float = 0.5, modes: int = 3
) -> tuple[Callable[[np.ndarray], np.ndarray], LatticeWavefunction]:
    """Random smooth Hermitian hoppings ``T(t)`` and a random nodeless state.

    Each upper-triangle link is a complex constant plus ``modes`` cosines with
    random complex amplitudes, frequencies in ``[0.5, 3]`` and phases. The
    state has moduli in ``[0.7, 1.3]`` before normalization and random phases.
    """
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(M, 1)
    n_links = iu[0].size
    coef = (rng.normal(size=(n_links, modes)) + 1j * rng.normal(size=(n_links, modes))) * (
        amplitude / np.sqrt(modes)
    )
    freq = rng.uniform(0.5, 3.0, size=(n_links, modes))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n_links, modes))
    base = (rng.normal(size=n_links) + 1j * rng.normal(size=n_links)) * amplitude

    def hoppings(t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, np.float64))
        upper = base + np.einsum("lm,klm->kl", coef, np.cos(freq * t[:, None, None] + phase))
        out = np.zeros((t.size, M, M), dtype=np.complex128)
        out[:, iu[0], iu[1]] = upper
        out[:, iu[1], iu[0]] = np.conj(upper)
        return out

    amp = rng.uniform(0.7, 1.3, M) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, M))
    return hoppings, LatticeWavefunction.normalized(amp)


def _run_roundtrip(cfg: ScenarioConfig) -> ScenarioResult:
    grid = TimeGrid.from_dt(0.0, cfg.t_end, cfg.dt)
    hoppings, psi0 = random_smooth_hoppings(cfg.sites, cfg.seed)
    T = hoppings(grid.times)
    forward = propagate_lattice(
        LatticeHamiltonianSignal.from_hoppings(grid, T, hoppings), psi0, substeps=cfg.substeps
    )
    Q = ComplexCurrent(grid, observable_from_state(T, forward.states))
    rec = reconstruct_hopping(Q, psi0)
    T_rec = rec.hoppings.values
    rel = float(np.max(np.abs(T_rec - T)) / np.max(np.abs(T)))
    target = ObservableTrajectory(grid, "site-densities", forward.densities, final_state=forward.final)
    signal = LatticeHamiltonianSignal.from_hoppings(grid, T_rec)
    report = verify_reconstruction(
        signal, target, psi0, _thresholds(cfg, cfg.t_end), substeps=cfg.substeps
    )
    checks = {"hopping_recovery": bool(rel <= cfg.thresholds["max_hopping_error"])}
    metrics = {"relative_hopping_error": rel, "min_density": float(forward.densities.min())}
    iu = np.triu_indices(cfg.sites, 1)
    names = [f"{i + 1}_{j + 1}" for i, j in zip(*iu)]
    chans, vals = _complex_channels("T_", T_rec[:, iu[0], iu[1]], names)
    pulse = ChannelTable("hoppings", grid, tuple(chans), vals, meta={"M": cfg.sites})
    sites = [str(i) for i in range(1, cfg.sites + 1)]
    obs = ChannelTable("site-densities", grid, tuple(f"n_{s}" for s in sites), forward.densities)
    wchans, wf = _complex_channels("psi_", rec.states, sites)
    wave = ChannelTable("lattice-wavefunction", grid, tuple(wchans), wf)
    return ScenarioResult(
        cfg,
        {"pulse": pulse, "observables": obs, "wavefunction": wave},
        _finish(cfg, report.as_dict(), checks, metrics),
    )


_RUNNERS = {
    "chain-reshape": _run_chain,
    "spin-not": _run_spin,
    "oscillator-scaling": _run_oscillator,
    "lattice-roundtrip": _run_roundtrip,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Reconstruct and verify one scenario (no file output)."""
    return _RUNNERS[cfg.scenario](cfg)


def write_artifacts(result: ScenarioResult, out_dir: str | Path) -> list[Path]:
    """Write tables, ``report.json`` and ``run.json`` under ``out_dir``.

    ``run.json`` holds the run metadata (configuration, package version,
    kernel backend); data files hold data only.
    """
    out = Path(out_dir)
    fmt = result.config.format
    written = [export_table(t, out / f"{name}.{fmt}", fmt) for name, t in result.tables.items()]
    if result.config.emit_plot_data:
        written += [export_table(t, out / "plot" / f"{name}.csv", "csv") for name, t in result.plots.items()]
    written.append(write_json(result.report, out / "report.json"))
    meta = {"config": result.config.as_dict(), "version": __version__, "backend": kernels.BACKEND}
    written.append(write_json(meta, out / "run.json"))
    return written


# --------------------------------------------------------------------------
# verification of exported files


def table_to_signal(table: ChannelTable, T0: float | None = None):
    """Control signal encoded by an exported pulse table."""
    g = table.grid
    if table.kind == "onsite-potential":
        hop = T0 if T0 is not None else table.meta.get("T0")
        if hop is None:
            raise InputError("on-site potential pulses need the hopping T0 (pass --T0)")
        return LatticeHamiltonianSignal.from_onsite(g, float(hop), table.samples)
    if table.kind == "field-pulse":
        return LatticeHamiltonianSignal.from_field(g, table.channel("Bx"), table.channel("By"))
    if table.kind == "hoppings":
        re = [c for c in table.channels if c.startswith("re_T_")]
        M = int(table.meta.get("M", 0)) or _sites_from_links(len(re))
        T = np.zeros((len(g), M, M), dtype=np.complex128)
        for c in re:
            i, j = (int(s) - 1 for s in c[len("re_T_") :].split("_"))
            val = table.channel(c) + 1j * table.channel("im_" + c[3:])
            T[:, i, j] = val
            T[:, j, i] = np.conj(val)
        return LatticeHamiltonianSignal.from_hoppings(g, T)
    if table.kind == "scalar-potential":
        x = table.x
        space = SpatialGrid(float(x[0]), float(x[-1]), x.size)
        return SpaceTimeField1D(space, g, table.channel("V"), float(table.meta.get("mass", 1.0)))
    raise InputError(f"cannot build a control signal from a {table.kind!r} table")


def _sites_from_links(n_links: int) -> int:
    M = int(round((1 + math.sqrt(1 + 8 * n_links)) / 2))
    if M * (M - 1) // 2 != n_links:
        raise InputError(f"{n_links} links do not form a complete lattice")
    return M


def table_to_target(table: ChannelTable, checkpoints: tuple[float, ...] = (), mass: float = 1.0):
    """Observable trajectory and initial state encoded by an exported target table.

    The initial state is the nodeless real state carrying the first sample
    (for Bloch targets, the Bloch states of the first and last samples give
    the initial and final states).
    """
    g = table.grid
    if table.kind == "site-densities":
        target = ObservableTrajectory(g, "site-densities", table.samples, checkpoints=checkpoints)
        return target, LatticeWavefunction.normalized(np.sqrt(table.samples[0]))
    if table.kind == "bloch":
        final = bloch_state(*table.samples[-1])
        target = ObservableTrajectory(
            g, "bloch", table.samples, final_state=final, checkpoints=checkpoints
        )
        return target, LatticeWavefunction.normalized(bloch_state(*table.samples[0]))
    if table.kind == "grid-density":
        x = table.x
        space = SpatialGrid(float(x[0]), float(x[-1]), x.size)
        n = table.channel("n")
        target = ObservableTrajectory(g, "grid-density", n, space=space)
        return target, GridWavefunction1D.normalized(space, np.sqrt(np.clip(n[0], 0, None)), mass)
    raise InputError(f"cannot build a target from a {table.kind!r} table")


def table_to_state(table: ChannelTable, mass: float = 1.0):
    """First sample of an exported wavefunction table as an initial state."""
    if table.layout == "wide":
        re = [c for c in table.channels if c.startswith("re_")]
        if not re or any("im_" + c[3:] not in table.channels for c in re):
            raise InputError("a lattice wavefunction table needs matching re_/im_ channels")
        amps = np.array([table.samples[0, table.channels.index(c)] for c in re])
        amps = amps + 1j * np.array([table.samples[0, table.channels.index("im_" + c[3:])] for c in re])
        return LatticeWavefunction.normalized(amps)
    x = table.x
    space = SpatialGrid(float(x[0]), float(x[-1]), x.size)
    amps = table.channel("re_psi")[0] + 1j * table.channel("im_psi")[0]
    return GridWavefunction1D.normalized(space, amps, float(table.meta.get("mass", mass)))


def default_out_dir(cfg: ScenarioConfig, env: dict[str, str]) -> Path:
    """Output directory: config/flag value, else ``$PULSEFORGE_OUT``, else ``./pulseforge_out``."""
    root = cfg.out or env.get("PULSEFORGE_OUT") or "pulseforge_out"
    return Path(root) / cfg.scenario
