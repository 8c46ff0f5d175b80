"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 200]

Each kernel runs on the shapes seen in the harness (small K, N; L up to a
few hundred) and the median time per call is reported for both backends.
"""
import argparse
import timeit

import numpy as np

from sepdemix import kernels
from sepdemix.model import complex_normal, make_rng


def cases(rng):
    for L, K, N, S in ((60, 5, 6, 2), (128, 8, 10, 3), (512, 25, 30, 4)):
        b = complex_normal(rng, (L, K))
        c = complex_normal(rng, (L, N))
        U = complex_normal(rng, (K, S))
        V = complex_normal(rng, (N, S))
        Z = U @ V.T
        y = complex_normal(rng, L)
        scale = np.sqrt(L)
        tag = f"L={L} K={K} N={N} S={S}"
        yield "factored_residual_grad", tag, lambda m, a=(b, c, U, V, y, scale, 1e-9): m.factored_residual_grad(*a)
        yield "forward_rows", tag, lambda m, a=(b, Z, c, scale): m.forward_rows(*a)
        yield "adjoint_rows", tag, lambda m, a=(b, y, c, scale): m.adjoint_rows(*a)
    for L in (16, 32, 64):
        x = complex_normal(rng, L)
        w = complex_normal(rng, L)
        yield "circular_convolve_direct", f"L={L}", lambda m, a=(x, w): m.circular_convolve_direct(*a)
    for R, S, K in ((2, 2, 5), (6, 3, 5), (8, 4, 25)):
        G = complex_normal(rng, (R, K, S))
        X = complex_normal(rng, (S, S))
        yield "column_norm_residuals", f"R={R} K={K} S={S}", lambda m, a=(G, X): m.column_norm_residuals(*a)


def median_time(fn, repeat):
    t = timeit.Timer(fn)
    number = max(1, int(0.002 / max(t.timeit(1), 1e-7)))
    return np.median([t.timeit(number) / number for _ in range(repeat // 10 or 1)])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=100)
    args = p.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled backend not built; only the numpy fallback is timed")
    rng = make_rng(0, "bench")
    print(f"{'kernel':<26} {'shape':<22} {'numpy [us]':>11} {'cython [us]':>12} {'speedup':>8}")
    for name, tag, call in cases(rng):
        t_py = median_time(lambda: call(kernels.python_backend), args.repeat) * 1e6
        if kernels.compiled_backend is not None:
            t_cy = median_time(lambda: call(kernels.compiled_backend), args.repeat) * 1e6
            print(f"{name:<26} {tag:<22} {t_py:>11.2f} {t_cy:>12.2f} {t_py / t_cy:>7.1f}x")
        else:
            print(f"{name:<26} {tag:<22} {t_py:>11.2f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
