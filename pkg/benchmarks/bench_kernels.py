"""Benchmark the compiled pair kernels against the numpy fallback.

Runs mean_opnorm_pow and mean_abs_matvec on matched random inputs with
both backends, checks agreement, and prints timings plus the speedup.

    python3 benchmarks/bench_kernels.py [--sizes 256,1024,4096] [--n 2]
"""

import argparse
import time

import numpy as np

from matweight.kernels import BACKEND, _pyref

try:
    from matweight.kernels import _fast
except ImportError:
    _fast = None


def _time(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(size: int, n: int, rng: np.random.Generator):
    A = rng.standard_normal((size, n, n))
    A = A + np.swapaxes(A, -1, -2)
    B = rng.standard_normal((size, n, n))
    B = B + np.swapaxes(B, -1, -2)
    G = rng.standard_normal((size, n))

    rows = []
    for name, args in (("mean_opnorm_pow", (A, B, 2.5)),
                       ("mean_abs_matvec", (A, G))):
        t_py, out_py = _time(getattr(_pyref, name), *args)
        if _fast is None:
            rows.append((name, size, t_py, None, None))
            continue
        t_cy, out_cy = _time(getattr(_fast, name), *args)
        err = float(np.max(np.abs(out_py - out_cy))
                    / max(1.0, float(np.max(np.abs(out_py)))))
        if err > 1e-10:
            raise AssertionError(
                f"backend mismatch for {name} at size {size}: {err:.2e}"
            )
        rows.append((name, size, t_py, t_cy, t_py / t_cy))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="256,1024,4096",
                    help="comma-separated pair-stack sizes")
    ap.add_argument("--n", type=int, default=2, help="matrix dimension")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"active backend: {BACKEND}"
          + ("" if _fast is not None else "  (compiled kernels unavailable)"))
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    header = f"{'kernel':<18}{'size':>7}{'numpy':>12}{'cython':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for size in (int(s) for s in args.sizes.split(",")):
        for name, sz, t_py, t_cy, sp in bench(size, args.n, rng):
            cy = f"{t_cy * 1e3:9.2f} ms" if t_cy is not None else "        --"
            spd = f"{sp:8.1f}x" if sp is not None else "       --"
            print(f"{name:<18}{sz:>7}{t_py * 1e3:9.2f} ms{cy}{spd}")


if __name__ == "__main__":
    main()
