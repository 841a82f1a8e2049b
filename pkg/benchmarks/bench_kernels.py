"""Compare the compiled kernels with the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat 20]``
"""
import argparse
import timeit

import numpy as np

from eigopt import kernels

CASES = {
    # (N, L+1, 1) bound denominator; (N, K, L) contrast grids; flat elementwise
    "logsumexp (10,11)": lambda r: (kernels.logsumexp, (r.standard_normal((10, 11)), -1)),
    "logsumexp (1000,101)": lambda r: (kernels.logsumexp, (r.standard_normal((1000, 101)), -1)),
    "logsumexp (200,64,50) axis 1": lambda r: (kernels.logsumexp, (r.standard_normal((200, 64, 50)), 1)),
    "softmax (1000,101)": lambda r: (kernels.softmax, (r.standard_normal((1000, 101)), -1)),
    "softmax (10,11)": lambda r: (kernels.softmax, (r.standard_normal((10, 11)), -1)),
    "sigmoid 100": lambda r: (kernels.sigmoid, (r.standard_normal(100) * 5,)),
    "softplus 100": lambda r: (kernels.softplus, (r.standard_normal(100) * 5,)),
    "sigmoid 1e5": lambda r: (kernels.sigmoid, (r.standard_normal(100000) * 5,)),
    "softplus 1e5": lambda r: (kernels.softplus, (r.standard_normal(100000) * 5,)),
    "log_sigmoid 1e5": lambda r: (kernels.log_sigmoid, (r.standard_normal(100000) * 5,)),
}


def bench(repeat=20, number=20):
    impls = kernels.backends()
    rows = []
    for name, make in CASES.items():
        fn, args = make(np.random.default_rng(0))
        times = {}
        for key, impl in impls.items():
            t = timeit.repeat(lambda: fn(*args, impl=impl), repeat=repeat, number=number)
            times[key] = min(t) / number
        rows.append((name, times))
    return list(impls), rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--number", type=int, default=20)
    a = ap.parse_args(argv)
    keys, rows = bench(a.repeat, a.number)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'case':32s}" + "".join(f"{k:>14s}" for k in keys) + ("     speedup" if len(keys) > 1 else ""))
    for name, t in rows:
        line = f"{name:32s}" + "".join(f"{t[k] * 1e6:12.1f}us" for k in keys)
        if "cython" in t:
            line += f"{t['python'] / t['cython']:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
