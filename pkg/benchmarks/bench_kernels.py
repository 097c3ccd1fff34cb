"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]

The first numba call compiles (or loads the on-disk cache); it is excluded
from the timings.  Results are checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from genrobust import _kernels as K


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    offsets = rng.standard_normal((n, 2))
    labels = rng.integers(0, 3, n)
    Z = rng.standard_normal((n, 10))
    y = np.cumsum(rng.standard_normal(min(n, 20_000)))
    w = np.ones_like(y)
    return [
        ("masked_norms", (offsets, labels, np.int64(1))),
        ("checkerboard_distance", (Z,)),
        ("checkerboard_parity", (Z,)),
        ("pava", (y, w)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if K.numba is None:
        print("numba is not installed; only the numpy kernels are available")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, fargs in cases(args.n, rng):
        f_np = getattr(K, name + "_numpy")
        f_nb = getattr(K, name + "_numba")
        np.testing.assert_allclose(f_nb(*fargs), f_np(*fargs), rtol=1e-12)
        t_np = best_of(f_np, fargs, args.repeat)
        t_nb = best_of(f_nb, fargs, args.repeat)
        print(f"{name:<24}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
