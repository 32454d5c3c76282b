"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Reports the best wall time of each implementation and the largest
difference in results (the two are meant to agree to rounding).
"""

import argparse
import math
import time

import numpy as np

from ou_entry import _fallback

try:
    from ou_entry import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def best_of(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    x = np.linspace(-30.0, 30.0, 20_000)
    yield ("log_cyl_integral  20k points", lambda m: m.log_cyl_integral(1.0, x)[0])
    stop_args = (1.0, 1.0, 1.0, 3.0, 1e-3, 20_000, -0.36, math.inf, 1.45, 2.04, 7, 20_000)
    yield ("simulate_stopping 20k paths",
           lambda m: np.nan_to_num(m.simulate_stopping(*stop_args)[0]))
    ctl_args = (1.0, 1.0, 1.0, 3.0, 1.0, 1e-3, 20_000, 0.32, 1.45, 2.04, 1.2152, 7, 10_000)
    yield ("simulate_entry_control 10k paths",
           lambda m: np.nan_to_num(m.simulate_entry_control(*ctl_args)[4]))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'kernel':36s} {'compiled [s]':>12s} {'fallback [s]':>12s} {'speed-up':>9s} "
          f"{'max |diff|':>11s}")
    for name, fn in cases():
        tc, rc = best_of(lambda: fn(_kernels), args.repeat)
        tf, rf = best_of(lambda: fn(_fallback), max(1, args.repeat // 3))
        diff = float(np.max(np.abs(rc - rf)))
        print(f"{name:36s} {tc:12.4f} {tf:12.4f} {tf / tc:9.1f} {diff:11.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
