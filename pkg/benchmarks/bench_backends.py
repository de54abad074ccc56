"""Time the sigma search in the compiled and pure-Python backends.

    python3 benchmarks/bench_backends.py [--sizes 10 100 300] [--queries 50]

Both backends run the same batch of queries on the same spectral model; the
script reports the wall time per query, the speed-up and the largest
disagreement between the two results.
"""

import argparse
import time

import numpy as np

from kernelbounds import _backend
from kernelbounds.bounds import BoundSolver
from kernelbounds.gp_core import ProblemData
from kernelbounds.kernels import Dirac, SquaredExponential


def make_solver(n, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 4, n))
    y = np.sin(2 * x) * 0.5 + 0.01 * rng.uniform(-1, 1, n)
    return BoundSolver(ProblemData(x, y, SquaredExponential(1.0), Dirac(), 1.0, n * 1e-4))


def run(backend, solver, a, v0, mode):
    c = solver.cfg
    t0 = time.perf_counter()
    out = backend.search_batch(
        solver.model.lam, a, solver.model.b, v0, solver.model.n_res, solver.data.gamma_f_sq, solver.data.gamma_w_sq,
        mode, None, solver.t_lo, solver.t_hi, list(c.seeds), c.grid_points, c.tol, c.max_iters,
    )
    return time.perf_counter() - t0, out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 100, 300])
    ap.add_argument("--queries", type=int, default=50)
    args = ap.parse_args()
    if _backend.compiled_backend is None:
        raise SystemExit("compiled backend not built; run `pip install -e . --no-build-isolation`")
    py, cy = _backend.python_backend, _backend.compiled_backend
    print(f"{'N':>5} {'mode':>6} {'python ms/q':>12} {'cython ms/q':>12} {'speed-up':>9} {'max |diff|':>11}")
    for n in args.sizes:
        solver = make_solver(n)
        a, v0, _ = solver.model.project(np.linspace(0, 4, args.queries))
        for mode, name in ((py.MODE_UPPER, "upper"), (py.MODE_LOWER, "lower")):
            tp, (_, vp, _, _) = run(py, solver, a, v0, mode)
            tc, (_, vc, _, _) = run(cy, solver, a, v0, mode)
            diff = float(np.max(np.abs(vp - vc)))
            q = args.queries
            print(f"{n:>5} {name:>6} {1e3 * tp / q:>12.3f} {1e3 * tc / q:>12.3f} {tp / tc:>9.1f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
