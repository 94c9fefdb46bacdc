"""Time the compiled kernels against the pure-Python fallback.

Workloads come from the package's own assembly path: Jacobi-PCG on the
elastic stiffness of uncracked meshes, and projected Gauss-Seidel on
the same matrices with box constraints.  Run as

    python3 benchmarks/bench_kernels.py [--repeats N] [--resolutions 8,16,24]
"""

import argparse
import time
from fractions import Fraction
from statistics import median

import numpy as np

from microfrac import (
    BoundaryCondition,
    CrackState,
    Domain,
    Material,
    apply_bc,
    available_backends,
    break_edges,
    build_grid,
    build_lattice,
)
from microfrac import ATParams
from microfrac.kernels import BoxQP, pcg_solve
from microfrac.phasefield import _node_colors, _tri_strain_density, _v_quadratic
from microfrac.solve import assemble, interpolate_bc


def build_system(n):
    lattice = build_lattice(Domain((0, 0), 1, 1), Fraction(1, 4))
    mesh = build_grid(lattice, n)
    conn = break_edges(mesh, CrackState(frozenset(), frozenset()))
    system = assemble(conn, Material(lam=1.0, mu=1.0, griffith=0.1), rho=0.0)
    bcmap = apply_bc(mesh, BoundaryCondition([[0.0, 0.05], [0.05, 0.1]]))
    full = interpolate_bc(conn, bcmap).reshape(-1)
    b = -(system.k_fp @ full[system.pinned_sc])
    return mesh, system.k_ff, b


def time_call(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return 1e3 * median(samples)


def bench_pcg(a, b, backend, repeats):
    # perturbed start so the solver does real work every repeat
    gen = np.random.default_rng(0)
    x0 = 1e-3 * gen.standard_normal(len(b))

    iters = {}

    def run():
        x, relres, it, converged = pcg_solve(a, b, x0=x0.copy(), tol=1e-8, backend=backend)
        assert converged
        iters["n"] = it

    ms = time_call(run, repeats)
    return ms, iters["n"]


def build_damage_step(mesh):
    """The box QP one sweep of the smeared solver actually poses."""
    mat = Material(lam=1.0, mu=1.0, griffith=0.1)
    u = mesh.nodes @ np.array([[0.0, 0.05], [0.05, 0.1]]).T
    w = _tri_strain_density(mesh, mat, u)
    params = ATParams(eta=2 * mesh.h)
    keep = np.ones(len(mesh.triangles))
    a, b = _v_quadratic(mesh, mat, params, w, keep)
    return a, b, _node_colors(mesh)


def bench_pgs(mesh, backend, repeats):
    a, b, colors = build_damage_step(mesh)
    n = a.shape[0]
    qp = BoxQP(a, np.zeros(n), np.ones(n), colors, backend=backend)

    def run():
        x = np.full(n, 0.5)
        for _ in range(20):
            qp.sweep(b, x)

    return time_call(run, repeats), n


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--resolutions", default="8,16,24",
                        help="comma-separated cell resolutions")
    args = parser.parse_args()
    resolutions = [int(v) for v in args.resolutions.split(",")]
    backends = available_backends()
    print(f"backends: {', '.join(backends)}   repeats: {args.repeats}")
    header = f"{'kernel':<6} {'dofs':>7} " + "".join(f"{b + ' (ms)':>16}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)

    for n in resolutions:
        mesh, a, b = build_system(n)
        rows = {}
        its = None
        for backend in backends:
            ms, it = bench_pcg(a, b, backend, args.repeats)
            rows[backend] = ms
            if its is None:
                its = it
        line = f"{'pcg':<6} {a.shape[0]:>7} " + "".join(f"{rows[b]:>16.2f}" for b in backends)
        if len(backends) == 2:
            line += f"{rows['python'] / rows['compiled']:>9.1f}x"
        print(line + f"   ({its} iterations)")

        rows = {}
        size = None
        for backend in backends:
            rows[backend], size = bench_pgs(mesh, backend, args.repeats)
        line = f"{'pgs':<6} {size:>7} " + "".join(f"{rows[b]:>16.2f}" for b in backends)
        if len(backends) == 2:
            line += f"{rows['python'] / rows['compiled']:>9.1f}x"
        print(line + "   (20 sweeps)")


if __name__ == "__main__":
    main()
