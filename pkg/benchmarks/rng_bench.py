"""Throughput comparison of the compiled and pure-Python RNG kernels.

Both backends produce bit-identical streams (verified here before
timing); the point of the compiled path is speed, so this prints draws
per second for the raw 64-bit, uniform, and normal fill kernels plus a
small end-to-end training-step comparison.

Run:  python benchmarks/rng_bench.py [--n 2000000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from flowmark.backend import load_backend
from flowmark.rng import SeededRng


def fresh_state(seed=1234):
    rng = SeededRng(seed)
    return rng._state.copy()


def time_fill(kernels, fill_name, n, repeat, dtype):
    fill = getattr(kernels, fill_name)
    best = np.inf
    for _ in range(repeat):
        state = fresh_state()
        out = np.empty(n, dtype=dtype)
        t0 = time.perf_counter()
        fill(state, out)
        best = min(best, time.perf_counter() - t0)
    return n / best


def verify_identical(cy, py, n=100001):
    for name, dtype in (("fill_u64", np.uint64), ("fill_uniform", float),
                        ("fill_normal", float)):
        a_state, b_state = fresh_state(), fresh_state()
        a = np.empty(n, dtype=dtype)
        b = np.empty(n, dtype=dtype)
        getattr(cy, name)(a_state, a)
        getattr(py, name)(b_state, b)
        if not (np.array_equal(a, b) and np.array_equal(a_state, b_state)):
            raise AssertionError("backend streams diverge in %s" % name)


def train_step_benchmark(repeat):
    """Wall time of a full training run under each backend selection.

    The RNG is a minority of a training step (the dense algebra is
    numpy either way), so this shows the end-to-end effect.
    """
    import flowmark as fm

    ds = fm.make_synthetic(fm.SeededRng(0), "gauss-mix-8", 64, 2000)
    key = fm.derive_key(0, 64, 16, 4)
    cfg = fm.TrainConfig(steps=60, batch=256, width=128, depth=3)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fm.train(ds.points, key, 1, cfg)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2_000_000,
                    help="draws per kernel timing")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-train", action="store_true")
    args = ap.parse_args()

    try:
        cy = load_backend("cython")
    except ImportError:
        print("compiled kernels not available; nothing to compare")
        return 1
    py = load_backend("python")

    verify_identical(cy, py)
    print("streams bit-identical across backends (100001 draws)\n")

    header = "%-14s %16s %16s %9s" % ("kernel", "cython draws/s",
                                      "python draws/s", "speedup")
    print(header)
    print("-" * len(header))
    for name, dtype in (("fill_u64", np.uint64), ("fill_uniform", float),
                        ("fill_normal", float)):
        # the python path is slow; time it on fewer draws
        r_cy = time_fill(cy, name, args.n, args.repeat, dtype)
        r_py = time_fill(py, name, max(args.n // 20, 10000), args.repeat,
                         dtype)
        print("%-14s %16.3g %16.3g %8.1fx" % (name, r_cy, r_py,
                                              r_cy / r_py))

    if not args.skip_train:
        print("\ntraining 60 steps (D=64, width 128, batch 256):")
        t = train_step_benchmark(max(args.repeat // 2, 1))
        print("  current backend: %.2f s" % t)
        print("  (set FLOWMARK_PURE_PYTHON=1 and rerun to compare)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
