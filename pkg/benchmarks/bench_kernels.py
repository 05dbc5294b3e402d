"""Compare the compiled and pure-numpy kernel paths on the hot loops.

Usage:
    python benchmarks/bench_kernels.py            # run both paths, print table
    python benchmarks/bench_kernels.py --emit     # run current path, emit JSON

The top-level invocation re-executes itself in two subprocesses, one with
STREAMFED_NO_NUMBA=1, so each path is timed in a clean interpreter. Every
kernel is called once before timing so jit compilation stays out of the
numbers.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, reps: int) -> float:
    fn()  # warm: compile and touch caches
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - t0) / reps)
    return best


def run_benchmarks() -> dict:
    from streamfed import _kernels as k

    rng = np.random.default_rng(0)
    n, d = 4096, 64
    X = rng.uniform(-1, 1, size=(n, d))
    y = (rng.uniform(size=n) < 0.5).astype(float)
    theta = rng.normal(size=d)
    w = rng.uniform(0.1, 1.0, size=n)
    w /= w.sum()
    v = rng.normal(scale=2.0, size=1000)
    M, m_hist = 50, 25
    sizes = np.full(M, 1.0 / M)
    p0 = sizes.copy()
    A = rng.dirichlet(np.ones(400), size=200).T.copy()  # 400 samples x 200 rounds
    q = rng.dirichlet(np.ones(200))

    results = {"using_numba": bool(k.USING_NUMBA), "timings_us": {}}
    Xs, ys, ws = X[:32, :21].copy(), y[:32].copy(), w[:32] / w[:32].sum()
    thetas = theta[:21].copy()
    cases = {
        "logistic_grad_weighted(32x21 minibatch)": (
            lambda: k.logistic_grad_weighted(thetas, Xs, ys, ws), 2000,
        ),
        "logistic_losses(4096x64)": (lambda: k.logistic_losses(theta, X, y), 50),
        "logistic_grad_weighted(4096x64)": (lambda: k.logistic_grad_weighted(theta, X, y, w), 50),
        "squared_losses(4096x64)": (lambda: k.squared_losses(theta, X, y), 50),
        "squared_grad_weighted(4096x64)": (lambda: k.squared_grad_weighted(theta, X, y, w), 50),
        "project_simplex(M=1000)": (lambda: k.project_simplex(v), 200),
        "psi_subgrad_arrays(M=50)": (lambda: k.psi_subgrad_arrays(p0, sizes, m_hist, 1.0, 0.3), 500),
        "minimize_psi_loop(M=50)": (
            lambda: k.minimize_psi_loop(p0, sizes, m_hist, 1.0, 0.3, 1e-10, 300_000, 100),
            3,
        ),
        "centered_coefficient_deviation(400x200)": (
            lambda: k.centered_coefficient_deviation(A, q), 50,
        ),
    }
    for name, (fn, reps) in cases.items():
        results["timings_us"][name] = _time(fn, reps) * 1e6
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--emit", action="store_true", help="run current path, print JSON")
    args = parser.parse_args()
    if args.emit:
        print(json.dumps(run_benchmarks()))
        return 0

    reports = {}
    for label, no_numba in (("numba", ""), ("numpy", "1")):
        env = dict(os.environ)
        if no_numba:
            env["STREAMFED_NO_NUMBA"] = no_numba
        else:
            env.pop("STREAMFED_NO_NUMBA", None)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--emit"],
            env=env, check=True, capture_output=True, text=True,
        )
        reports[label] = json.loads(out.stdout.strip().splitlines()[-1])

    if not reports["numba"]["using_numba"]:
        print("note: numba unavailable, both columns ran the numpy path")
    width = max(len(name) for name in reports["numba"]["timings_us"])
    print(f"{'kernel':<{width}}  {'numba (us)':>12}  {'numpy (us)':>12}  {'speedup':>8}")
    for name, t_nb in reports["numba"]["timings_us"].items():
        t_np = reports["numpy"]["timings_us"][name]
        print(f"{name:<{width}}  {t_nb:>12.1f}  {t_np:>12.1f}  {t_np / t_nb:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
