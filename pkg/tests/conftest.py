from __future__ import annotations

import re

import numpy as np
import pytest

from pulseforge.chain_control import ChainSpec, onsite_potential, two_stage_density
from pulseforge.core import LatticeWavefunction, TimeGrid
from pulseforge.spin_control import not_gate_pulse

# --------------------------------------------------------------------------
# shared reconstructions (expensive, built once)


@pytest.fixture(scope="session")
def reshaped_chain():
    """Two-stage reshaping of the 11-site chain at dt = 1e-3."""
    spec = ChainSpec(11, 1.0)
    grid = TimeGrid.from_dt(0.0, 12.0, 1e-3)
    program = two_stage_density(spec, 3.0, 12.0, grid)
    psi0 = LatticeWavefunction(np.sqrt(program.densities[0]))
    return spec, program, psi0, onsite_potential(program, spec, psi0)


@pytest.fixture(scope="session")
def not_gate():
    grid = TimeGrid(0.0, 12.0, 100_000)
    return not_gate_pulse(1.0, 12.0, grid)


# --------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_RESULTS: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.match(item.name)
    if m is None or item.module.__name__.split(".")[-1] != "test_acceptance":
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        metrics = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _RESULTS[int(m.group(1))] = ("PASS" if rep.passed else "FAIL", doc, metrics)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        status, doc, metrics = _RESULTS[num]
        line = f"{status} criterion {num}: {doc}"
        terminalreporter.write_line(line + (f"  [{metrics}]" if metrics else ""))
