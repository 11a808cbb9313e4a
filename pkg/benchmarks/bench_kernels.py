"""Timing comparison: numba-compiled kernels vs the pure-numpy fallbacks.

Run as a script:

    python3 benchmarks/bench_kernels.py [--n 256] [--reps 5]

Both backends are exercised in one process (the numpy implementations are
always importable; the numba twins exist when numba does), outputs are
checked bitwise-identical before timing, and the table reports best-of-reps
wall time per call. Without numba installed the script still runs and says
so.
"""

import argparse
import time

import numpy as np

from volumize import _kernels
from volumize.linalg import SeededRng


def best_of(fn, reps: int) -> float:
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=256, help="matrix side; vector sizes scale with n**2")
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    rng = SeededRng(0)
    n = args.n
    a = rng.uniform(-1.0, 1.0, (n, n))
    b = rng.uniform(-1.0, 1.0, (n, n))
    nv = n * n * 4
    w = np.ascontiguousarray(rng.uniform(-2.0, 2.0, nv))
    m = np.ascontiguousarray(rng.normal(nv))
    g = np.ascontiguousarray(rng.normal(nv))
    n2 = np.abs(rng.normal(nv))
    u = rng.uniform(-1.0, 1.0, nv * 4)
    eta = rng.uniform(-0.5, 0.5, nv * 4)

    # each case: (label, runner) where runner(fn) leaves its results in
    # fresh arrays and returns them for the bitwise cross-check
    def run_matmul(f):
        return (f(a, b),)

    def run_volumize(f):
        wc, mc = w.copy(), m.copy()
        f(wc, mc, 0.5, 0.9, False)
        return wc, mc

    def run_adam(f):
        wc, mc, nc = w.copy(), m.copy(), n2.copy()
        f(wc, g, mc, nc, 1e-3, 0.9, 0.999, 1e-8, 0.5, 0.5)
        return wc, mc, nc

    def run_cv(f):
        return (f(u, eta, 1.2),)

    def run_flow(f):
        wc = w.copy()
        d = f(wc, u[:nv], 0.1, 0.5, 0.9, False)
        return wc, np.atleast_1d(d)

    cases = [
        ("matmul_nn (%dx%d)" % (n, n), run_matmul, "matmul_nn"),
        ("volumize (%.1fM)" % (nv / 1e6), run_volumize, "volumize"),
        ("adam_update (%.1fM)" % (nv / 1e6), run_adam, "adam_update"),
        ("clip_sq_cv_values (%.1fM)" % (u.size / 1e6), run_cv, "clip_sq_cv_values"),
        ("flow_iter_identity (%.1fM)" % (nv / 1e6), run_flow, "flow_iter_identity"),
    ]

    has_numba = _kernels.HAS_NUMBA
    print(f"numba available: {has_numba}; active backend: {_kernels.backend()}")
    print(f"{'kernel':<34}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for label, runner, stem in cases:
        f_np = getattr(_kernels, stem + "_np")
        t_np = best_of(lambda: runner(f_np), args.reps)
        if has_numba:
            f_nb = getattr(_kernels, stem + "_nb")
            runner(f_nb)  # compile before comparing or timing
            for x, y in zip(runner(f_np), runner(f_nb)):
                assert np.array_equal(x, y), f"backend mismatch in {label}"
            t_nb = best_of(lambda: runner(f_nb), args.reps)
            print(f"{label:<34}{t_np*1e3:>10.2f}ms{t_nb*1e3:>10.2f}ms{t_np/t_nb:>9.1f}x")
        else:
            print(f"{label:<34}{t_np*1e3:>10.2f}ms{'-':>12}{'-':>10}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
