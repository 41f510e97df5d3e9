"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Prints best-of-N wall time per kernel and backend, the speed-up and whether
the two backends returned bit-identical results.
"""
import argparse
import time

import numpy as np

from biolage import _fallback
from biolage.ibm import draw_jump_events, make_rng
from biolage.model import ModelParams, validate
from biolage.moments import cascade_coefficients

try:
    from biolage import _kernels
except ImportError:
    _kernels = None


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_jumps():
    n = 100_000
    rng = make_rng(0)
    base = np.full(n, 20.0)
    times, idx, kinds = draw_jump_events(rng, n, 1.0, 0.5, 0.0, 10.0)

    def call(mod):
        def run():
            off = base.copy()
            mod.apply_jumps(off, times, idx, kinds, 1.1, 0.9)
            return off

        return run

    return f"apply_jumps ({len(times)} events)", call


def bench_rk4():
    vp = validate(ModelParams(0.1, 0.1, g_plus=1.1, g_minus=0.99))
    rates, source, _ = cascade_coefficients(vp, 100)
    y0 = np.ones(101)

    def call(mod):
        def run():
            y, e = y0.copy(), np.zeros(101, dtype=np.int64)
            mod.rk4_cascade(y, e, rates, source, 0.05, 20_000, 1)
            return np.concatenate([y, e.astype(float)])

        return run

    return "rk4_cascade (K=100, 20000 steps)", call


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':36s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s}  identical")
    for make in (bench_jumps, bench_rk4):
        label, call = make()
        tp, rp = _best(call(_fallback), args.repeat)
        if _kernels is None:
            print(f"{label:36s} {tp:11.4f} {'-':>11s} {'-':>9s}  -")
            continue
        tc, rc = _best(call(_kernels), args.repeat)
        same = np.array_equal(rp, rc)
        print(f"{label:36s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}x  {same}")


if __name__ == "__main__":
    main()
