"""Time operator assembly with the numba kernels against the numpy fallback.

    python benchmarks/bench_assembly.py [--nu 2 3 4] [--repeat 3]

The first numba call includes compilation and is reported separately.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fosb_em._accel import HAVE_NUMBA, use_backend
from fosb_em.geometry import geodesic_sphere
from fosb_em.operators import assemble_boundary_operators
from fosb_em.spaces import build_space


def _time(space, ks, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = assemble_boundary_operators(space, ks)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--nu", type=int, nargs="+", default=[2, 3, 4])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--k", type=float, nargs="+", default=[3.0, 3.0 * 2.1**0.5])
    args = p.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    with use_backend("numba"):
        t0 = time.perf_counter()
        assemble_boundary_operators(build_space(geodesic_sphere(1)), args.k)
        print(f"numba warm-up (compile) {time.perf_counter() - t0:.2f}s")

    print(f"{'nu':>3} {'edges':>6} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max rel diff':>13}")
    for nu in args.nu:
        space = build_space(geodesic_sphere(nu))
        with use_backend("numpy"):
            t_np, ref = _time(space, args.k, args.repeat)
        with use_backend("numba"):
            t_nb, got = _time(space, args.k, args.repeat)
        diff = max(
            np.linalg.norm(got[key].matrix - ref[key].matrix) / np.linalg.norm(ref[key].matrix)
            for key in ref
        )
        print(f"{nu:>3} {space.N:>6} {t_np:>10.3f} {t_nb:>10.3f} {t_np / t_nb:>8.1f} {diff:>13.2e}")


if __name__ == "__main__":
    main()
