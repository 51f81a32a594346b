"""Compiled vs numpy characteristic sweeps.

    python3 benchmarks/bench_sweep.py [--repeat 20]

Times ``cumulative`` and ``char_sweep`` on the array shapes met by the
operators at (M, N_x) = (16, 65), (32, 129) and (64, 257), a batch of 64
right-hand sides (the shape of a dense-matrix assembly), and checks that both
backends agree.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from hyperlock import _sweep_py
from hyperlock._grid import cell_rule
from hyperlock.field import DEFAULT_QUAD_ORDER

try:
    from hyperlock import _sweep as compiled
except ImportError:  # extension not built
    compiled = None

SIZES = [(16, 65), (32, 129), (64, 257)]
BATCH = 64


def cases(modes: int, nx: int, rng):
    n_t = 4 * modes
    starts, weights = cell_rule(nx, DEFAULT_QUAD_ORDER)
    h = 1.0 / (nx - 1)
    f = rng.standard_normal((BATCH, nx, n_t))
    expg = np.exp(0.3 * rng.standard_normal((nx, n_t)))
    return {
        "cumulative": lambda mod, base: mod.cumulative(f, starts, weights, h, base),
        "char_sweep": lambda mod, base: mod.char_sweep(f, expg, starts, weights, h, base),
    }


def bench(repeat: int) -> list[tuple]:
    rng = np.random.default_rng(7)
    rows = []
    for modes, nx in SIZES:
        for name, call in cases(modes, nx, rng).items():
            for base in (0, 1):
                ref = call(_sweep_py, base)
                t_py = min(timeit.repeat(lambda: call(_sweep_py, base), number=1, repeat=repeat))
                if compiled is None:
                    rows.append((modes, nx, name, base, t_py, float("nan"), float("nan")))
                    continue
                diff = float(np.abs(call(compiled, base) - ref).max() / np.abs(ref).max())
                t_c = min(timeit.repeat(lambda: call(compiled, base), number=1, repeat=repeat))
                rows.append((modes, nx, name, base, t_py, t_c, diff))
    return rows


def bench_operator(repeat: int) -> list[tuple]:
    """Whole ``apply_D`` on a batch of fields, through the public operator."""
    from hyperlock import charops, kernels
    from hyperlock.field import Numerics
    from hyperlock.problem import manufacture_system

    problem, sol = manufacture_system()
    out = []
    for modes, nx in SIZES[:2]:
        num = Numerics(modes=modes, n_x=nx)
        form = charops.SystemForm(problem, num, sol.field(num))
        chars = form.chars(1.0)
        rng = np.random.default_rng(3)
        u = rng.standard_normal((BATCH, 2, nx, modes + 1)) + 1j * rng.standard_normal((BATCH, 2, nx, modes + 1))
        timings = {}
        saved = kernels.char_sweep
        for label, mod in (("numpy", _sweep_py), ("cython", compiled)):
            if mod is None:
                continue
            charops.kernels.char_sweep = mod.char_sweep
            try:
                timings[label] = min(timeit.repeat(lambda: chars.apply_D(u), number=1, repeat=repeat))
            finally:
                charops.kernels.char_sweep = saved
        out.append((modes, nx, timings.get("numpy", float("nan")), timings.get("cython", float("nan"))))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    print(f"compiled extension: {'available' if compiled else 'missing'}; batch {BATCH}")
    print(f"{'M':>4} {'N_x':>5} {'kernel':>11} {'base':>4} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'rel diff':>9}")
    for modes, nx, name, base, t_py, t_c, diff in bench(args.repeat):
        print(f"{modes:4d} {nx:5d} {name:>11} {base:4d} {1e3 * t_py:10.3f} {1e3 * t_c:10.3f} "
              f"{t_py / t_c:8.2f} {diff:9.1e}")
    print("\napply_D on a batch of fields")
    print(f"{'M':>4} {'N_x':>5} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for modes, nx, t_py, t_c in bench_operator(max(3, args.repeat // 4)):
        print(f"{modes:4d} {nx:5d} {1e3 * t_py:10.3f} {1e3 * t_c:10.3f} {t_py / t_c:8.2f}")


if __name__ == "__main__":
    main()
