"""Time the compiled and pure-Python kernels against each other.

    python benchmarks/bench_kernels.py [--repeat 3]

Prints one line per (kernel, size, backend) with the best wall time and
the speed-up of the compiled kernel. Results must agree to round-off.
"""
import argparse
import time

import numpy as np

from romforge import kernels
from romforge.graph import chain_graph, propagation_matrix


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_jacobi(mods, rows, cols, repeat):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((rows, cols))
    results = {}
    for name, mod in mods.items():
        def run():
            h = np.array(a.T, order="C")
            q = np.eye(cols)
            mod.jacobi_sweeps(h, q, rows * np.finfo(float).eps, 60)
            return np.sort(np.linalg.norm(h, axis=1))  # singular values
        results[name] = best_of(run, repeat)
    return results


def bench_spmm(mods, n_nodes, width, repeat):
    p = propagation_matrix(chain_graph(n_nodes, 3))
    x = np.random.default_rng(1).standard_normal((n_nodes, width))
    results = {}
    for name, mod in mods.items():
        def run():
            for _ in range(20):
                out = mod.csr_matmat(p.indptr, p.indices, p.data, x)
            return out
        results[name] = best_of(run, repeat)
    return results


def report(label, results):
    base = results.get("python")
    for name, (sec, _) in results.items():
        extra = ""
        if name != "python" and base is not None:
            err = np.max(np.abs(results[name][1] - base[1]))
            extra = f"  speed-up x{base[0] / sec:.2f}  max|diff| {err:.1e}"
        print(f"{label:<28} {name:<7} {sec * 1e3:10.2f} ms{extra}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    mods = kernels.backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(mods)}")
    for rows, cols in ((256, 64), (256, 256), (1200, 256)):
        report(f"jacobi_sweeps {rows}x{cols}", bench_jacobi(mods, rows, cols, args.repeat))
    for n, width in ((256, 20), (4096, 20), (4096, 64)):
        report(f"csr_matmat N={n} k={width} x20", bench_spmm(mods, n, width, args.repeat))


if __name__ == "__main__":
    main()
