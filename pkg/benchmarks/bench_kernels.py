"""Compare the compiled and pure-Python propagation kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--steps 20000]

Prints the best wall time per backend, the speed-up and the max absolute
difference between the two results.
"""
from __future__ import annotations

import argparse
import time

import numpy as np
from scipy.linalg import expm

from pulseforge import kernels


def _unitaries(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    base = expm(-1j * 1e-3 * (a + a.conj().T))
    return np.broadcast_to(base, (n, m, m)).copy()


def _best(fn, repeat: int) -> tuple[float, np.ndarray]:
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_lattice(steps: int, sites: int, repeat: int) -> dict:
    rng = np.random.default_rng(0)
    U = _unitaries(steps, sites, rng)
    psi0 = np.ones(sites, np.complex128) / np.sqrt(sites)
    return {
        name: _best(lambda mod=mod: mod.apply_unitaries(U, psi0), repeat)
        for name, mod in kernels.backends().items()
    }


def bench_grid(steps: int, points: int, repeat: int) -> dict:
    x = np.linspace(-10.0, 10.0, points)
    dx = x[1] - x[0]
    v = np.broadcast_to(0.5 * x * x, (steps, points)).copy()
    psi0 = (np.exp(-0.5 * x * x) / np.pi**0.25).astype(np.complex128)
    save = np.zeros(steps, bool)
    save[-1] = True

    def run(mod):
        out = np.zeros((2, points), np.complex128)
        out[0] = psi0
        mod.cn_propagate(v, psi0, dx, 1e-3, 1.0, save, out)
        return out[-1]

    return {name: _best(lambda mod=mod: run(mod), repeat) for name, mod in kernels.backends().items()}


def _report(title: str, res: dict) -> None:
    print(title)
    for name, (t, _) in res.items():
        print(f"  {name:9s} {t * 1e3:10.2f} ms")
    if {"python", "compiled"} <= res.keys():
        speed = res["python"][0] / res["compiled"][0]
        diff = float(np.max(np.abs(res["python"][1] - res["compiled"][1])))
        print(f"  speed-up  {speed:10.2f}x   max |diff| = {diff:.3e}")
    else:
        print("  compiled backend not built; nothing to compare")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--sites", type=int, default=11)
    p.add_argument("--points", type=int, default=512)
    args = p.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    _report(f"lattice: {args.steps} steps x {args.sites} sites", bench_lattice(args.steps, args.sites, args.repeat))
    _report(
        f"grid (Crank-Nicolson): {args.steps // 4} steps x {args.points} points",
        bench_grid(args.steps // 4, args.points, args.repeat),
    )


if __name__ == "__main__":
    main()
