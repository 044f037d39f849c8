"""Timing of the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. The first numba call
compiles (or loads from cache) and is excluded from the timings.
"""

import argparse
import timeit

import numpy as np

from fembae import _kernels
from fembae.mesh import build_annular_layer_mesh


def line_inputs(n_nodes: int, n_reps: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    xi = np.sort(rng.uniform(0, np.pi, n_nodes))
    w = rng.uniform(0, 1e-3, n_nodes)
    lam = 0.9 * np.exp(1j * rng.uniform(-np.pi, np.pi, n_nodes))
    inv_d = rng.normal(size=n_nodes) + 1j * rng.normal(size=n_nodes)
    p = rng.integers(0, 60, n_reps).astype(np.int64)
    q = rng.integers(0, 60, n_reps).astype(np.int64)
    return p, q, xi, w, np.log(lam), inv_d


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cases = []
    for n_nodes, n_reps in ((2000, 200), (8000, 1000)):
        a = line_inputs(n_nodes, n_reps)
        _kernels.line_sums_jit(*a)
        cases.append((f"line sums {n_reps} orbits x {n_nodes} nodes",
                      lambda a=a: _kernels.line_sums_numpy(*a),
                      lambda a=a: _kernels.line_sums_jit(*a)))
    for radius, sigma in ((10.0, 1.0), (30.0, 0.25)):
        mesh, _ = build_annular_layer_mesh(radius, 1.0, sigma, radius + 10.0)
        pts = np.ascontiguousarray(mesh.nodes)
        tri = np.ascontiguousarray(mesh.triangles, dtype=np.int64)
        _kernels.p1_elements_jit(pts, tri, 0.25 + 0j)
        cases.append((f"P1 elements, {len(tri)} triangles",
                      lambda p=pts, t=tri: _kernels.p1_elements_numpy(p, t, 0.25 + 0j),
                      lambda p=pts, t=tri: _kernels.p1_elements_jit(p, t, 0.25 + 0j)))

    print(f"{'kernel':45s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, slow, fast in cases:
        t_np, t_nb = best_of(slow, args.repeat), best_of(fast, args.repeat)
        print(f"{name:45s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
