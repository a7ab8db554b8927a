"""Command-line entry point: ``pulseforge <scenario>``, ``verify`` and ``batch``.

Configuration precedence, highest first: command-line flags, the ``--config``
JSON document, ``$PULSEFORGE_OUT`` (output directory only), built-in defaults.

Exit codes: 0 success, 1 other failure, 2 bad input or config,
3 representability failure, 4 verification threshold failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .errors import InputError, PulseforgeError, VerificationError
from .io import import_table, write_json
from .propagator import Thresholds, verify_reconstruction
from .scenarios import (
    SCENARIOS,
    ScenarioConfig,
    default_out_dir,
    run_scenario,
    table_to_signal,
    table_to_state,
    table_to_target,
    write_artifacts,
)

__all__ = ["main", "build_parser"]

log = logging.getLogger("pulseforge")

_PARAMS: dict[str, tuple[tuple[str, type, str], ...]] = {
    "chain-reshape": (
        ("M", int, "number of sites"),
        ("T0", float, "nearest-neighbour hopping"),
        ("t1", float, "end of the stage-one reshaping"),
        ("t2", float, "end of the stage-two reshaping"),
        ("dt", float, "time step"),
    ),
    "spin-not": (
        ("B0", float, "field magnitude at the pulse endpoints"),
        ("tau", float, "gate duration"),
        ("dt", float, "time step"),
    ),
    "oscillator-scaling": (
        ("omega0", float, "initial trap frequency"),
        ("mass", float, "particle mass"),
        ("tau", float, "ramp duration"),
        ("stretch", float, "relative change of the scale factor"),
        ("shift", float, "displacement of the trap centre"),
        ("x_max", float, "half-width of the spatial box"),
        ("n_points", int, "spatial grid points"),
        ("dt", float, "time step"),
        ("export_stride", int, "write every n-th time step of grid fields"),
    ),
    "lattice-roundtrip": (
        ("sites", int, "number of sites"),
        ("seed", int, "random seed for the hopping program"),
        ("t_end", float, "duration"),
        ("dt", float, "time step"),
    ),
}

_THRESHOLD_FLAGS = (
    "max_density_error",
    "min_fidelity",
    "max_norm_drift",
    "min_checkpoint_overlap",
    "phase_tol",
)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory (default $PULSEFORGE_OUT or ./pulseforge_out)")
    p.add_argument("--format", choices=("csv", "json"), help="data file format (default csv)")
    p.add_argument(
        "--emit-plot-data",
        action="store_true",
        default=None,
        help="also write per-figure CSVs under <out>/plot",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulseforge",
        description="Reconstruct driving fields from prescribed observables and verify them.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", type=Path, help="JSON configuration document")
        for param, typ, text in _PARAMS[name]:
            p.add_argument(_flag(param), dest=param, type=typ, help=text)
        p.add_argument("--substeps", type=int, help="propagator substeps per time step")
        p.add_argument(
            "--threshold",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a verification threshold, e.g. min_fidelity=0.999",
        )
        _add_output_flags(p)

    v = sub.add_parser("verify", help="propagate an exported pulse and compare with a target")
    v.add_argument("pulse", type=Path, help="pulse file (csv or json)")
    v.add_argument("target", type=Path, help="target observable file (csv or json)")
    v.add_argument("--pulse-kind", help="kind of a CSV pulse (onsite-potential, field-pulse, hoppings, scalar-potential)")
    v.add_argument("--target-kind", help="kind of a CSV target (site-densities, bloch, grid-density)")
    v.add_argument(
        "--initial-state",
        type=Path,
        help="wavefunction file whose first sample is the initial state (default: nodeless state of the target)",
    )
    v.add_argument("--T0", type=float, help="hopping for on-site potential pulses")
    v.add_argument("--mass", type=float, default=1.0, help="particle mass for grid pulses")
    v.add_argument("--checkpoint", type=float, action="append", default=[], help="ground-state checkpoint time")
    v.add_argument("--substeps", type=int, default=2)
    for key in _THRESHOLD_FLAGS:
        v.add_argument(_flag(key), dest=key, type=float)
    v.add_argument("--expected-phase", type=float, help="expected global phase of the final state")
    v.add_argument("--report", type=Path, help="also write the report JSON here")

    b = sub.add_parser("batch", help="run several configuration documents")
    b.add_argument("configs", nargs="+", type=Path, help="JSON configuration documents")
    b.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_output_flags(b)
    return parser


# --------------------------------------------------------------------------


def _read_config(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError(f"config {path} must be a JSON object")
    return doc


def _parse_thresholds(items: Sequence[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise InputError(f"threshold override {item!r} is not KEY=VALUE")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise InputError(f"threshold {key!r} needs a number, got {val!r}") from None
    return out


def _config_for(scenario: str, doc: dict[str, Any], flags: dict[str, Any]) -> ScenarioConfig:
    if doc.get("scenario", scenario) != scenario:
        raise InputError(f"config is for {doc['scenario']!r}, not {scenario!r}")
    base = ScenarioConfig.from_dict({**doc, "scenario": scenario})
    return base.merged(flags)


def _execute(cfg: ScenarioConfig, env: dict[str, str]) -> tuple[int, str]:
    """Run one scenario and write its artifacts; returns (exit code, summary)."""
    out = default_out_dir(cfg, env)
    try:
        result = run_scenario(cfg)
    except PulseforgeError as exc:
        return exc.exit_code, f"{cfg.scenario}: {type(exc).__name__}: {exc}"
    write_artifacts(result, out)
    if not result.passed:
        failed = ", ".join(k for k, ok in result.report["checks"].items() if not ok)
        return VerificationError.exit_code, f"{cfg.scenario}: FAIL ({failed}); artifacts in {out}"
    return 0, f"{cfg.scenario}: PASS; artifacts in {out}"


def _run_one(args: argparse.Namespace) -> int:
    flags: dict[str, Any] = {p: getattr(args, p) for p, _, _ in _PARAMS[args.command]}
    flags.update(
        substeps=args.substeps,
        out=args.out,
        format=args.format,
        emit_plot_data=args.emit_plot_data,
    )
    th = _parse_thresholds(args.threshold)
    if th:
        flags["thresholds"] = th
    cfg = _config_for(args.command, _read_config(args.config), flags)
    log.info("running %s", cfg.scenario)
    code, msg = _execute(cfg, dict(os.environ))
    print(msg, file=sys.stdout if code == 0 else sys.stderr)
    return code


def _batch_worker(doc: dict[str, Any], flags: dict[str, Any], env: dict[str, str]) -> tuple[int, str]:
    try:
        if "scenario" not in doc:
            raise InputError("batch configs must name their scenario")
        cfg = _config_for(doc["scenario"], doc, flags)
        return _execute(cfg, env)
    except PulseforgeError as exc:
        return exc.exit_code, f"{doc.get('scenario', '?')}: {exc}"


def _run_batch(args: argparse.Namespace) -> int:
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    docs = [_read_config(p) for p in args.configs]
    env = dict(os.environ)
    jobs = []
    for path, doc in zip(args.configs, docs):
        flags = {"format": args.format, "emit_plot_data": args.emit_plot_data}
        root = args.out or doc.get("out") or env.get("PULSEFORGE_OUT") or "pulseforge_out"
        # one directory per config file so two configs of one scenario do not collide
        flags["out"] = str(Path(root) / path.stem)
        jobs.append((doc, flags))
    if args.jobs == 1:
        results = [_batch_worker(d, f, env) for d, f in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_batch_worker, *zip(*jobs), [env] * len(jobs)))
    worst = 0
    for code, msg in results:
        print(msg)
        worst = max(worst, code)
    return worst


def _run_verify(args: argparse.Namespace) -> int:
    pulse = import_table(args.pulse, kind=args.pulse_kind)
    target_table = import_table(args.target, kind=args.target_kind)
    signal = table_to_signal(pulse, args.T0)
    target, psi0 = table_to_target(target_table, tuple(args.checkpoint), mass=args.mass)
    if args.initial_state is not None:
        psi0 = table_to_state(import_table(args.initial_state), mass=args.mass)
    th = Thresholds(
        max_density_error=args.max_density_error,
        min_fidelity=args.min_fidelity,
        max_norm_drift=args.max_norm_drift if args.max_norm_drift is not None else 1e-10 * max(1.0, target.grid.duration),
        min_checkpoint_overlap=args.min_checkpoint_overlap,
        expected_phase=args.expected_phase,
        phase_tol=args.phase_tol if args.phase_tol is not None else 1e-4,
    )
    report = verify_reconstruction(signal, target, psi0, th, substeps=args.substeps)
    doc = report.as_dict()
    if args.report is not None:
        write_json(doc, args.report)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0 if report.passed else VerificationError.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "verify":
            return _run_verify(args)
        if args.command == "batch":
            return _run_batch(args)
        return _run_one(args)
    except PulseforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
