"""Time the numba and numpy paths of the hot kernels side by side.

    python benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 3]

Both paths run in-process through the ``use_numba`` override; results are
checked for agreement before timings are printed.
"""
import argparse
import time

import numpy as np

from portlab import _kernels
from portlab._accel import HAS_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_jacobi(n, repeat, rng):
    a = rng.normal(size=(n, n))
    a = a + a.T
    tol = 1e-12 * np.linalg.norm(a)
    _kernels.jacobi_eig(a[:4, :4], tol, use_numba=True)  # compile outside the timer
    t_nb, (w_nb, _, _) = best_of(lambda: _kernels.jacobi_eig(a, tol, use_numba=True), repeat)
    t_np, (w_np, _, _) = best_of(lambda: _kernels.jacobi_eig(a, tol, use_numba=False), repeat)
    assert np.allclose(np.sort(w_nb), np.sort(w_np), atol=1e-8)
    return t_nb, t_np


def bench_assignment(n, repeat, rng):
    c = rng.uniform(size=(n, n))
    _kernels.assignment(c[:4, :4], use_numba=True)
    t_nb, cols_nb = best_of(lambda: _kernels.assignment(c, use_numba=True), repeat)
    t_np, cols_np = best_of(lambda: _kernels.assignment(c, use_numba=False), repeat)
    rows = np.arange(n)
    assert np.isclose(c[rows, cols_nb].sum(), c[rows, cols_np].sum())
    return t_nb, t_np


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--assign-sizes", type=int, nargs="+", default=[100, 250, 500])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12}{'n':>6}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for n in args.sizes:
        t_nb, t_np = bench_jacobi(n, args.repeat, rng)
        print(f"{'jacobi':<12}{n:>6}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")
    for n in args.assign_sizes:
        t_nb, t_np = bench_assignment(n, args.repeat, rng)
        print(f"{'assignment':<12}{n:>6}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
