"""Benchmark the compiled flow kernel against the pure NumPy fallback.

The explicit biharmonic descent runs a synchronous stencil update over the
masked nodes for as many as millions of iterations, so the per-iteration
constant dominates inpainting runtime.  This script times both backends on
the same deterministic workloads and reports the speedup.

Usage: python benchmarks/bench_kernels.py [--iters N]
"""

import argparse
import time

import numpy as np

from lhsurf._kernels import available_backends, get_backend
from lhsurf.grid import HoleMask, ParamGrid, ScalarField


def workload(n, hole):
    grid = ParamGrid(n, 1.0)
    rng = np.random.default_rng(12345)
    coeffs = rng.normal(size=(4, 4))

    def fn(u, v):
        out = np.zeros_like(u)
        for a in range(4):
            for b in range(4):
                out += coeffs[a, b] * np.sin((a + 1) * np.pi * u) * np.sin((b + 1) * np.pi * v)
        return out

    field = ScalarField.sample(grid, fn)
    mask = HoleMask.from_rect(grid, 0.5 - hole, 0.5 + hole, 0.5 - hole, 0.5 + hole)
    return grid, field, mask


def run(backend, grid, field, mask, iters):
    kern = get_backend(backend)
    work = np.array(field.values, copy=True)
    mj, mi = mask.indices()
    dj, di = np.nonzero(mask.dilated(1))
    dj, di = dj.astype(np.int64), di.astype(np.int64)
    t0 = time.perf_counter()
    status, done, energies = kern.run_flow(
        work, mj, mi, dj, di, grid.h, grid.h**4 / 40.0, 0.0, iters
    )
    dt = time.perf_counter() - t0
    return dt, done, float(energies[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=20000, help="fixed iteration count per case")
    args = ap.parse_args()

    backends = available_backends()
    if backends == ["python"]:
        print("compiled kernel not built; benchmarking the fallback alone")

    cases = [(32, 0.10), (64, 0.10), (128, 0.10), (128, 0.25)]
    header = f"{'grid':>6} {'masked':>7} " + " ".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9}"
    print(header)
    for n, hole in cases:
        grid, field, mask = workload(n, hole)
        times = {}
        energy = {}
        for b in backends:
            t, done, e = run(b, grid, field, mask, args.iters)
            times[b] = t / done * 1e6
            energy[b] = e
        row = f"{n:>6} {mask.count:>7} " + " ".join(f"{times[b]:>9.1f} us" for b in backends)
        if len(backends) == 2:
            row += f" {times['python'] / times['native']:>8.1f}x"
        print(row)
        if len(backends) == 2:
            rel = abs(energy["python"] - energy["native"]) / max(abs(energy["python"]), 1e-300)
            assert rel < 1e-9, f"backends disagree: {rel}"
    print(f"(per-iteration time over {args.iters} iterations; energies cross-checked)")


if __name__ == "__main__":
    main()
