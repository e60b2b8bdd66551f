"""Timing comparison of the numba and numpy kernel backends.

Runs the three hot stages (vertex-block assembly, block elimination, stress
recovery) on one mesh per backend and prints a small table of best-of-N
wall times.  The numba backend gets an untimed warmup call so JIT compilation
is not billed to the measurement.

Usage:
    python benchmarks/backend_bench.py --n 64 --method msmfe1 --repeats 5
"""

from __future__ import annotations

import argparse
import time

from msmfe._kernels import available_backends, use_backend
from msmfe.assembly import assemble, build_dof_map
from msmfe.manufactured import get_case
from msmfe.mesh import generate_smooth
from msmfe.solver import eliminate_rotation, eliminate_stress, solve


def time_stages(mesh, method, repeats):
    """Best wall time per stage over ``repeats`` runs, as a dict."""
    case = get_case("trig")
    dofmap = build_dof_map(mesh, method)
    best = {"assemble": float("inf"), "eliminate": float("inf"), "solve": float("inf")}
    for _ in range(repeats):
        t0 = time.perf_counter()
        system = assemble(
            mesh, dofmap, case.compliance, case.body_force, case.displacement
        )
        t1 = time.perf_counter()
        reduced = eliminate_stress(system, dofmap)
        if method == "msmfe1":
            reduced = eliminate_rotation(reduced)
        t2 = time.perf_counter()
        solve(reduced)
        t3 = time.perf_counter()
        best["assemble"] = min(best["assemble"], t1 - t0)
        best["eliminate"] = min(best["eliminate"], t2 - t1)
        best["solve"] = min(best["solve"], t3 - t2)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=64, help="mesh cells per side")
    parser.add_argument("--method", default="msmfe1", choices=("msmfe0", "msmfe1"))
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per backend")
    parser.add_argument(
        "--backends",
        nargs="+",
        default=None,
        help="backends to time (default: all available)",
    )
    args = parser.parse_args(argv)

    names = args.backends if args.backends else available_backends()
    mesh = generate_smooth(args.n)
    print(
        f"mesh: smooth {args.n}x{args.n} ({mesh.n_cells} cells), "
        f"method: {args.method}, best of {args.repeats}"
    )
    print(f"{'backend':>8} {'assemble':>12} {'eliminate':>12} {'solve':>12}")

    results = {}
    for name in names:
        use_backend(name)
        time_stages(mesh, args.method, repeats=1)  # warmup (JIT, caches)
        results[name] = time_stages(mesh, args.method, args.repeats)
        row = results[name]
        print(
            f"{name:>8} {row['assemble']:>11.4f}s {row['eliminate']:>11.4f}s "
            f"{row['solve']:>11.4f}s"
        )

    if {"numba", "numpy"} <= results.keys():
        for stage in ("assemble", "eliminate", "solve"):
            ratio = results["numpy"][stage] / results["numba"][stage]
            print(f"numpy/numba {stage}: {ratio:.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
