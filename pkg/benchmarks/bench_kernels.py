"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Checks that both backends agree bit for bit, then reports the best-of-N
wall time of each kernel on a desk-scale workload.
"""

import argparse
import time

import numpy as np

from fedsim import _kernels_py

try:
    from fedsim import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workloads(seed=0):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(20, 61, size=10000)
    tokens = rng.integers(0, 500, size=int(lengths.sum()), dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return {
        # one secure round: 10 clients x 9 peers x a 5140-coordinate model
        "mask_stream": lambda k: [k.mask_stream(s, 5141, 32) for s in range(90)],
        # featurizing the default text classification training split
        "embed_counts_batch": lambda k: k.embed_counts_batch(tokens, offsets, 256, 7),
        "embed_counts (one doc)": lambda k: [k.embed_counts(tokens[:60], 256, s) for s in range(200)],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the numpy fallback is available")
    print(f"{'kernel':<24} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, run in workloads().items():
        t_py, out_py = best_of(lambda: run(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:<24} {1e3 * t_py:>10.2f} {'-':>10} {'-':>8}")
            continue
        t_c, out_c = best_of(lambda: run(_kernels), args.repeat)
        a = np.asarray(out_py)
        b = np.asarray(out_c)
        if not np.array_equal(a, b):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<24} {1e3 * t_py:>10.2f} {1e3 * t_c:>10.2f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
