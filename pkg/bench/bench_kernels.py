"""Time the numba kernels against their numpy twins.

    python bench/bench_kernels.py [--n-train 2000] [--n-query 1000] [--d 8] [--repeat 5]

Prints one row per kernel with the best-of-N wall time for each backend, the
speedup, and the max absolute difference between the two outputs.
"""

import argparse
import time

import numpy as np

from novelty_eval import kernels, scorers
from novelty_eval._accel import HAVE_NUMBA


def best_time(fn, repeat):
    out = fn()  # warm-up (and JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-query", type=int, default=1000)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; install the 'fast' extra")

    rng = np.random.default_rng(args.seed)
    pts = rng.normal(size=(args.n_train, args.d))
    q = rng.normal(size=(args.n_query, args.d))
    forest = scorers.fit("iforest", pts).state
    tree = [forest[k] for k in ("feature", "threshold", "left", "right", "leaf_value", "roots")]

    cases = {
        "sq_distances": lambda impl: impl(q, pts),
        "kde_log_density": lambda impl: impl(q, pts, 0.5),
        "knn": lambda impl: impl(q, pts, args.k, False)[0],
        "iforest_path": lambda impl: impl(q, *tree),
    }
    print(f"{'kernel':<18}{'numpy s':>10}{'numba s':>10}{'speedup':>9}{'max diff':>11}")
    for name, call in cases.items():
        t_np, out_np = best_time(lambda: call(getattr(kernels, name + "_numpy")), args.repeat)
        t_nb, out_nb = best_time(lambda: call(getattr(kernels, name + "_numba")), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_np) - np.asarray(out_nb))))
        print(f"{name:<18}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
