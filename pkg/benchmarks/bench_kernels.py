"""Benchmark the compiled kernels against the pure-numpy fallback.

Times thomas_solve and csr_cg on problem sizes representative of the FEM
solvers (1D tridiagonal systems and 2D five/nine-point stiffness matrices),
and checks that both backends agree to near machine precision.

Run:  python3 benchmarks/bench_kernels.py [--repeats 50]
"""
from __future__ import annotations

import argparse
import importlib
import time

import numpy as np


def _load_backends():
    from mismc._kernels import _fallback

    backends = {"numpy": _fallback}
    try:
        core = importlib.import_module("mismc._kernels._core")
        backends["compiled"] = core
    except ImportError:
        print("compiled extension not available; benchmarking the fallback only")
    return backends


def _tridiag_problem(n, rng):
    diag = 2.0 + rng.random(n)
    lower = -rng.random(n - 1)
    upper = -rng.random(n - 1)
    rhs = rng.standard_normal(n)
    return lower, diag, upper, rhs


def _csr_problem(r, rng):
    """SPD 2D Laplacian-like stiffness matrix on a 2^r x 2^r interior grid."""
    from mismc.models.elliptic2d import fem2d_assemble

    x = rng.uniform(-1.0, 1.0, size=2)
    A, load = fem2d_assemble(x, (r, r))
    A = A.tocsr()
    return A.indptr, A.indices, A.data, load


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    backends = _load_backends()

    print(f"{'kernel':<22}{'size':>10}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")

    for n in (129, 1025, 8193):
        problem = _tridiag_problem(n, rng)
        times, sols = {}, {}
        for name, mod in backends.items():
            times[name], sols[name] = _time(lambda m=mod: m.thomas_solve(*problem), args.repeats)
        _report("thomas_solve", n, times, sols, backends)

    for r in (4, 5, 6):
        indptr, indices, data, b = _csr_problem(r, rng)
        times, sols = {}, {}
        for name, mod in backends.items():
            times[name], out = _time(
                lambda m=mod: m.csr_cg(indptr, indices, data, b, 1e-10, 10_000), args.repeats
            )
            x, iters, converged = out
            assert converged, f"{name} CG did not converge at r={r}"
            sols[name] = x
        _report("csr_cg", (2**r - 1) ** 2, times, sols, backends)


def _report(kernel, size, times, sols, backends):
    names = list(backends)
    if len(names) == 2:
        a, b = sols[names[0]], sols[names[1]]
        err = float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))
        assert err < 1e-10, f"backend mismatch for {kernel} at size {size}: {err:.3g}"
        speedup = f"{times['numpy'] / times['compiled']:>9.1f}x"
    else:
        speedup = f"{'n/a':>10}"
    cols = "".join(f"{times[name] * 1e6:>12.1f}us" for name in names)
    print(f"{kernel:<22}{size:>10}{cols}{speedup}")


if __name__ == "__main__":
    main()
