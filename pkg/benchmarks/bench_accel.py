"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:  python3 benchmarks/bench_accel.py [--repeats 5]

Times each kernel pair from dasmc.accel.PAIRS on representative inputs
and reports per-call times plus the speedup, and checks the two paths
agree numerically. Setting DASMC_DISABLE_NUMBA=1 at import time would
select the numpy path package-wide; here both twins are called directly.
"""

import argparse
import time

import numpy as np

from dasmc.accel import PAIRS, USE_NUMBA

try:
    from numba import njit
except ImportError:
    njit = None


def timeit(fn, args, repeats):
    fn(*args)  # warm up / compile
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def build_inputs(rng):
    n = 2048
    acov = 0.9 ** np.arange(n) / (1 - 0.81)
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    m, q = 400, 120
    design = rng.standard_normal((m, q))
    design[:, 1] = 0.7 * design[:, 0] + 0.7 * design[:, 1]        # correlated pair
    y = design[:, :5] @ rng.standard_normal(5) + 0.1 * rng.standard_normal(m)
    lams = np.geomspace(50.0, 0.05, 30)
    gram = np.ascontiguousarray(design.T @ design)
    xty = design.T @ y
    return {
        "lasso_cd_path": (np.ascontiguousarray(design), y, lams, 1e-8, 1000),
        "lasso_cd_gram": (gram, xty, lams, 1e-8, 1000),
        "dl_loglike": (acov, x),
        "dl_simulate": (acov, z),
        "arma_fi_grid": (16384, 1.0, 0.4, np.array([0.45, 0.1]), np.array([-0.4])),
    }


def check_agreement(name, a, b):
    if name == "arma_fi_grid":
        g0a, ha = a
        g0b, hb = b
        return max(abs(g0a - g0b), float(np.max(np.abs(ha - hb))))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    scale = max(1.0, float(np.max(np.abs(a))))
    return float(np.max(np.abs(a - b))) / scale


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    inputs = build_inputs(rng)
    print(f"numba available for package use: {USE_NUMBA}")
    print(f"{'kernel':16s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, (impl, np_fn) in PAIRS.items():
        a = inputs[name]
        jit_fn = njit(cache=True, nogil=True)(impl) if njit is not None else impl
        out_jit = jit_fn(*a)
        out_np = np_fn(*a)
        diff = check_agreement(name, out_jit, out_np)
        t_jit = timeit(jit_fn, a, args.repeats)
        t_np = timeit(np_fn, a, args.repeats)
        print(f"{name:16s} {t_jit*1e3:9.2f}ms {t_np*1e3:9.2f}ms "
              f"{t_np/t_jit:7.1f}x {diff:13.2e}")


if __name__ == "__main__":
    main()
