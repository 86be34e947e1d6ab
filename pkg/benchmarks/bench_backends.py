#!/usr/bin/env python3
"""Timing and agreement check for the compiled vs NumPy sweep kernels.

Runs every per-step advection kernel on identical random inputs through
both backends, reports per-call time (copy overhead subtracted), speedup,
and the max absolute disagreement.  The compiled module is optional; build
it with `python3 setup.py build_ext --inplace`.

    python3 benchmarks/bench_backends.py [--nx 128] [--ns 32] [--nr 64]
                                         [--repeats 9]
"""

import argparse
import math
import time

import numpy as np

from surfkin import _kernels_py as kpy

try:
    from surfkin import _kernels as kcy
except ImportError:
    kcy = None


def best_of(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - tic)
    return best


def bench_kernel(name, args_factory, repeats):
    """One row: run both backends from identical inputs, time and compare."""
    base_args = args_factory()
    out = {}
    for label, mod in (("python", kpy), ("cython", kcy)):
        if mod is None:
            continue
        fn = getattr(mod, name)
        args = [a.copy() for a in base_args]
        fn(*args)
        out[label] = args[0]

        work = [a.copy() for a in base_args]

        def call():
            np.copyto(work[0], base_args[0])
            fn(*work)

        def copy_only():
            np.copyto(work[0], base_args[0])

        t_call = best_of(call, repeats)
        t_copy = best_of(copy_only, repeats)
        out[label + "_ms"] = max(t_call - t_copy, 0.0) * 1e3

    delta = (float(np.max(np.abs(out["python"] - out["cython"])))
             if kcy is not None else float("nan"))
    return out.get("python_ms"), out.get("cython_ms"), delta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=128, help="spatial cells")
    ap.add_argument("--ns", type=int, default=32, help="transported cells")
    ap.add_argument("--nr", type=int, default=64, help="remaining cells")
    ap.add_argument("--repeats", type=int, default=9,
                    help="timing repeats (best is kept)")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    shape = (args.nx, args.ns, args.nr)
    g = rng.random(shape)
    nu_s = rng.uniform(-0.9, 0.9, args.ns)          # per-species Courant
    nu_x = rng.uniform(-0.9, 0.9, args.nx)          # per-cell Courant
    h = rng.random(shape)
    jc = rng.uniform(-0.9, 0.9, (args.nx, args.ns))

    cases = [
        ("advect_x_upwind", lambda: (g, nu_s)),
        ("advect_x_muscl", lambda: (g, nu_s)),
        ("advect_x_fromm", lambda: (g, nu_s)),
        ("advect_v_upwind", lambda: (g, nu_x)),
        ("advect_v_muscl", lambda: (g, nu_x)),
        ("advect_v_fromm", lambda: (g, nu_x)),
        ("advect_fine_masses", lambda: (g, h, jc)),
    ]

    print(f"field shape {shape}, best of {args.repeats} repeats")
    if kcy is None:
        print("compiled backend not built "
              "(python3 setup.py build_ext --inplace); python only\n")
        print(f"{'kernel':22s} {'python':>10s}")
        for name, factory in cases:
            t_py, _, _ = bench_kernel(name, factory, args.repeats)
            print(f"{name:22s} {t_py:8.3f}ms")
        return

    print(f"{'kernel':22s} {'python':>10s} {'cython':>10s} "
          f"{'speedup':>8s} {'max |diff|':>11s}")
    speedups = []
    worst = 0.0
    for name, factory in cases:
        t_py, t_cy, delta = bench_kernel(name, factory, args.repeats)
        speedups.append(t_py / t_cy if t_cy > 0 else float("inf"))
        worst = max(worst, delta)
        print(f"{name:22s} {t_py:8.3f}ms {t_cy:8.3f}ms "
              f"{speedups[-1]:7.1f}x {delta:11.2e}")
    gmean = math.exp(sum(math.log(s) for s in speedups) / len(speedups))
    print(f"\ngeometric-mean speedup {gmean:.1f}x, "
          f"worst backend disagreement {worst:.2e}")


if __name__ == "__main__":
    main()
