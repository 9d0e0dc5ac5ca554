#!/usr/bin/env python3
"""Compare the accelerated and pure-numpy projection kernels.

Both backends run in one process; the first accelerated call is made
outside the timed region so compilation cost is not counted.

    python3 benchmarks/bench_tomo.py [--sizes 64,128,192] [--repeats 5]
"""

import argparse
import time

import numpy as np

from fedemu.tomo import ReconParams, fbp, make_disk_phantom, radon


def best_time(fn, repeats: int) -> float:
    return min(_timed(fn) for _ in range(repeats))


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_size(n: int, repeats: int):
    disk = make_disk_phantom(n, 0.45, 1.0)
    angles = np.linspace(0.0, np.pi, n, endpoint=False)
    n_s = int(1.5 * n) | 1
    params = ReconParams(len(angles), n_s, n)

    results = {}
    sinograms = {}
    for backend in ("numba", "numpy"):
        sinograms[backend] = radon(disk, angles, n_s, backend=backend)  # warm-up
        results[f"radon/{backend}"] = best_time(
            lambda b=backend: radon(disk, angles, n_s, backend=b), repeats
        )
    images = {}
    for backend in ("numba", "numpy"):
        images[backend] = fbp(sinograms[backend], params, backend=backend)
        results[f"fbp/{backend}"] = best_time(
            lambda b=backend: fbp(sinograms[backend], params, backend=b), repeats
        )

    agree = max(
        float(np.max(np.abs(sinograms["numba"].data - sinograms["numpy"].data))),
        float(np.max(np.abs(images["numba"].values - images["numpy"].values))),
    )
    return results, agree


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="64,128,192")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"{'n':>5} {'kernel':<6} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for n in sizes:
        results, agree = bench_size(n, args.repeats)
        for kernel in ("radon", "fbp"):
            fast = results[f"{kernel}/numba"]
            slow = results[f"{kernel}/numpy"]
            print(
                f"{n:>5} {kernel:<6} {fast * 1e3:>8.2f}ms {slow * 1e3:>8.2f}ms"
                f" {slow / fast:>7.1f}x"
            )
        print(f"{n:>5} max |numba - numpy| = {agree:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
