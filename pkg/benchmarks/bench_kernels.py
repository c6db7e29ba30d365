"""Time the compiled scans against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--rows 2000] [--horizon 2000] [--repeat 5]

Inputs are the same for both backends, and the outputs are checked equal
before anything is timed.
"""
import argparse
import timeit

import numpy as np

from rumorlab import kernels
from rumorlab.laws import BernoulliCount, PowerRadius
from rumorlab.rng import derive
from rumorlab.sim_line import simulate_line_batch


def radii_block(rows, horizon, seed=0):
    rng = np.random.default_rng(seed)
    # heavy-ish tail so the firework scan does not stop after a few sites
    rt = np.floor(4.0 / rng.random((rows, horizon + 1))).astype(np.int64)
    rt[rng.random(rt.shape) < 0.5] = 0
    return rt


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--horizon", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    py, cy = kernels.python_kernels, kernels.compiled_kernels
    if cy is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return

    rt = radii_block(args.rows, args.horizon)
    start = np.ones(args.rows, dtype=np.uint8)
    keys = np.array([derive(i) for i in range(args.rows)], dtype=np.uint64)
    cases = {
        "firework_scan": lambda k: k.firework_scan(rt, start, args.horizon),
        "reverse_scan": lambda k: k.reverse_scan(rt, args.horizon, -1),
        "block_uniforms": lambda k: k.block_uniforms(keys, 0, args.horizon),
    }

    print(f"rows={args.rows} horizon={args.horizon} best of {args.repeat}")
    print(f"{'kernel':<16}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, call in cases.items():
        a, b = call(py), call(cy)
        a, b = (a,) if isinstance(a, np.ndarray) else a, (b,) if isinstance(b, np.ndarray) else b
        assert all(np.array_equal(x, y) for x, y in zip(a, b)), name
        tp, tc = best(lambda: call(py), args.repeat), best(lambda: call(cy), args.repeat)
        print(f"{name:<16}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")

    # end to end, through whichever backend is active
    seeds = list(range(args.rows))
    t = best(lambda: simulate_line_batch("firework", BernoulliCount(0.5), PowerRadius(c=4, beta=1),
                                         args.horizon, seeds, seeds), max(1, args.repeat // 2))
    print(f"simulate_line_batch firework ({kernels.BACKEND}): {t:.3f} s")


if __name__ == "__main__":
    main()
