"""Compare the compiled core with the pure-Python fallback.

Usage::

    python benchmarks/bench_core.py [--repeat 5] [--nx 512] [--modes 30]

For each kernel the script reports the best wall time of both backends, the
speed-up, and the largest difference between their outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from kdvfeedback import _backend, _core_py
from kdvfeedback.kernel import synthesize
from kdvfeedback.sim import SimConfig, initial_profile, simulate_closed_loop
from kdvfeedback.spectral import Grid
from kdvfeedback.transform import TransformOperator


def best_of(fn, repeat: int) -> tuple[float, object]:
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def picard_case(core, nx: int, steps: int):
    grid = Grid(3.0, nx)
    ab = _core_py.step_matrix_band(nx, grid.h, 0.5e-3)
    lu, piv, _ = _core_py.band_factor(ab)
    u = np.ascontiguousarray(0.01 * np.sin(np.pi * grid.nodes / 3.0))
    gw = np.ascontiguousarray(0.1 * np.cos(grid.nodes) * grid.weights)
    gaps = np.zeros(30)

    def run():
        v = u
        for _ in range(steps):
            rhs = core.explicit_rhs(v, grid.h, 0.5e-3, True)
            v, _, _ = core.picard_step(lu, piv, rhs, v, gw, 0.0, 0.5e-3, grid.h, 1e-12, 30, True, gaps)
        return v

    return run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--nx", type=int, default=512)
    ap.add_argument("--modes", type=int, default=30)
    ap.add_argument("--steps", type=int, default=500)
    args = ap.parse_args()

    fast = _backend.compiled_core()
    if fast is None:
        print("compiled core not built; only the Python fallback is available")
        return
    slow = _core_py
    rng = np.random.default_rng(0)
    n = args.nx + 1
    A = rng.standard_normal((2 * args.modes, n)) + 1j * rng.standard_normal((2 * args.modes, n))
    B = rng.standard_normal((2 * args.modes, n)) + 1j * rng.standard_normal((2 * args.modes, n))
    u = rng.standard_normal(n)
    h = 3.0 / args.nx

    cases = {
        "series_pairs": (lambda c: (lambda: c.series_pairs(A, B))),
        "explicit_rhs": (lambda c: (lambda: c.explicit_rhs(u, h, 1e-3, True))),
        f"picard x{args.steps}": (lambda c: picard_case(c, args.nx, args.steps)),
    }
    print(f"{'kernel':<16}{'python [s]':>12}{'cython [s]':>12}{'speed-up':>10}{'max diff':>12}")
    for name, make in cases.items():
        ts, out_s = best_of(make(slow), args.repeat)
        tf, out_f = best_of(make(fast), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_s) - np.asarray(out_f))))
        print(f"{name:<16}{ts:>12.4f}{tf:>12.4f}{ts / tf:>10.1f}{diff:>12.2e}")

    # end-to-end: the reference closed-loop run with each backend selected
    _, kern = synthesize(3.0, 1.0, args.modes, args.nx)
    op = TransformOperator(kern)
    cfg = SimConfig(kern.grid, 1e-3, 2.0)
    v0 = initial_profile("sine", kern.grid, 0.01)
    times = {}
    for label, core in (("python", slow), ("cython", fast)):
        _backend.core = core
        times[label], tr = best_of(lambda: simulate_closed_loop(v0, cfg, kern, op), 1)
        times[label + "_final"] = tr.norm_w[-1]
    _backend.core = fast
    print(
        f"{'closed loop t=2':<16}{times['python']:>12.4f}{times['cython']:>12.4f}"
        f"{times['python'] / times['cython']:>10.1f}{abs(times['python_final'] - times['cython_final']):>12.2e}"
    )


if __name__ == "__main__":
    main()
