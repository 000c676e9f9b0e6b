"""Benchmark: compiled quadrature kernel vs the pure-numpy twin.

Times the raw node-evaluation kernel on a representative constant-mode
workload (rank-2 with a boundary potential term, the general per-sample
path) and the end-to-end integrate_batch call. Run:

    python benchmarks/bench_zero_mode.py [n_samples]

Set TODALAB_PURE=1 to force the numpy backend at import time; this script
instead calls both twins directly so one process reports both.
"""

import sys
import time

import numpy as np

from todalab.kernels import _quadcore_py

try:
    from todalab.kernels import _quadcore

    HAVE_COMPILED = True
except ImportError:
    _quadcore = None
    HAVE_COMPILED = False

from todalab import zeromode as zm


def kernel_inputs(S, d=2, m=3, n_nodes_per_dim=32, seed=0):
    rng = np.random.default_rng(seed)
    xi, wq, shell = zm._de_nodes(n_nodes_per_dim, d, 4.0)
    ls0 = rng.standard_normal(S)
    lsv = 0.3 * rng.standard_normal((S, d))
    zb = rng.standard_normal((S, m)) - 1.0
    zA = 0.2 * rng.standard_normal((S, m, d))
    K = np.exp(rng.standard_normal((S, m)))
    logmax = np.zeros(S)
    return (ls0, lsv, zb, zA, K, logmax, xi, wq, shell.astype(np.uint8))


def time_call(fn, *args, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    S = int(sys.argv[1]) if len(sys.argv) > 1 else 50_000
    args = kernel_inputs(S)
    n_evals = S * args[6].shape[0]

    t_py, (acc_py, _) = time_call(_quadcore_py.quad_nodes_eval, *args)
    print(f"kernel numpy    : {t_py:8.3f} s   ({n_evals / t_py:.2e} node-evals/s)")
    if HAVE_COMPILED:
        t_c, (acc_c, _) = time_call(_quadcore.quad_nodes_eval, *args)
        rel = np.abs(acc_py - acc_c) / np.maximum(np.abs(acc_py), 1e-300)
        print(f"kernel compiled : {t_c:8.3f} s   ({n_evals / t_c:.2e} node-evals/s)")
        print(f"kernel speedup  : {t_py / t_c:8.2f}x   (max rel diff {rel.max():.2e})")
    else:
        print("kernel compiled : unavailable (extension not built)")

    # end-to-end: representative rank-2 + boundary-term workload
    rng = np.random.default_rng(3)
    svec = np.array([2.5, 1.8])
    R = np.array([[1.2, 0.0], [-0.55, 1.05], [0.6, 0.5]])
    K = np.exp(rng.standard_normal((S, 3)))

    import todalab.kernels as kernels

    saved = kernels._impl
    kernels._impl = None
    t_full_py, _ = time_call(zm.integrate_batch, svec, R, K, repeat=1)
    print(f"integrate numpy : {t_full_py:8.3f} s for {S} samples")
    if HAVE_COMPILED:
        kernels._impl = _quadcore
        t_full_c, _ = time_call(zm.integrate_batch, svec, R, K, repeat=1)
        print(f"integrate comp. : {t_full_c:8.3f} s for {S} samples")
        print(f"end-to-end speedup: {t_full_py / t_full_c:6.2f}x")
    kernels._impl = saved


if __name__ == "__main__":
    main()
