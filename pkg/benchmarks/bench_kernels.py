"""Benchmark the compiled cumulative-product kernel against the numpy fallback.

Run:  python benchmarks/bench_kernels.py

The cumulative transfer-matrix product is the sequential inner loop of every
fundamental-solution propagation; everything else in the propagation pipeline
is batched numpy. This script times both implementations on representative
step counts and state dimensions and checks they agree bitwise-closely, then
times a full conjugate scan end to end under each implementation.
"""

import time

import numpy as np

from mptp._kernels import _cumprod_py
from mptp._kernels import IMPLEMENTATION, cumprod_matmul


def make_steps(M, d, seed=0):
    rng = np.random.default_rng(seed)
    steps = np.eye(d) + 0.01 * rng.standard_normal((M, d, d))
    return np.ascontiguousarray(steps)


def time_fn(fn, arg, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(arg)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernel():
    print(f"selected implementation: {IMPLEMENTATION}")
    print(f"{'M':>6} {'2n':>4} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for M in (400, 1600, 6400):
        for d in (2, 4, 8):
            steps = make_steps(M, d)
            ref = _cumprod_py.cumprod_matmul(steps)
            t_py = time_fn(_cumprod_py.cumprod_matmul, steps)
            if IMPLEMENTATION == "compiled":
                out = cumprod_matmul(steps)
                err = np.abs(out - ref).max()
                if err > 1e-10 * max(1.0, np.abs(ref).max()):
                    raise AssertionError(f"kernel mismatch: {err}")
                t_c = time_fn(cumprod_matmul, steps)
                print(f"{M:>6} {d:>4} {t_py * 1e3:>10.3f}ms {t_c * 1e3:>10.3f}ms "
                      f"{t_py / t_c:>8.1f}x")
            else:
                print(f"{M:>6} {d:>4} {t_py * 1e3:>10.3f}ms {'n/a':>12} {'':>9}")


def bench_scan():
    from mptp.hamiltonian import SturmCoefficients, conjugate_scan

    co = SturmCoefficients.constant(1.0, [[-(2.5 * np.pi) ** 2]], M=1600)
    t0 = time.perf_counter()
    crossings = conjugate_scan(co, compute_forms=False)
    dt = time.perf_counter() - t0
    print(f"conjugate scan (M=1600, {IMPLEMENTATION}): {dt * 1e3:.1f} ms, "
          f"{len(crossings)} crossings")


if __name__ == "__main__":
    bench_kernel()
    bench_scan()
