"""Compare the compiled kernels with the NumPy fallback.

Usage: ``python benchmarks/bench_kernels.py [--n 64] [--repeat 5]``.
Prints the best-of-``repeat`` time per call for each kernel and backend.
"""
import argparse
import timeit

import numpy as np

from phasetr import kernels
from phasetr.mesh import build_mesh


def cases(n: int, rng):
    mesh = build_mesh((-1.0, 1.0, -1.0, 2.0), n, n)
    A = (mesh.mass + 0.01 * mesh.stiffness_unit).tocsr()
    x = rng.standard_normal(mesh.n_nodes)
    wb = rng.uniform(size=mesh.n_nodes)
    cand = wb + rng.standard_normal(mesh.n_nodes)
    frames_a, frames_b = rng.standard_normal((2, 64, mesh.n_nodes))
    return {
        "csr_matvec": lambda impl: kernels.csr_matvec(A, x, impl=impl),
        "pcg": lambda impl: kernels.pcg(A, x, np.zeros_like(x), 1e-10, 10000, impl=impl),
        "project_box_ball": lambda impl: kernels.project_box_ball(cand, wb, mesh.lumped, 0.05, 200, impl=impl),
        "triangle_pair_sums": lambda impl: kernels.triangle_pair_sums(
            frames_a, frames_b, mesh.triangles, mesh.local_stiffness, impl=impl),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=64, help="cells per direction")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    impls = kernels.IMPLEMENTATIONS
    if "compiled" not in impls:
        print("compiled extension not available; timing the fallback only")
    print(f"mesh {args.n}x{args.n}, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{name:>14}" for name in impls) + f"{'speedup':>10}")
    for name, fn in cases(args.n, np.random.default_rng(0)).items():
        times = {}
        for backend, impl in impls.items():
            fn(impl)  # warm up
            times[backend] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
        row = f"{name:<20}" + "".join(f"{times[b] * 1e3:>12.3f}ms" for b in impls)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
