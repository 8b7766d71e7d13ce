"""Compare the compiled and numpy split-scan backends.

    python benchmarks/bench_split.py [--n 20000] [--repeat 5]

Times one split scan per criterion and a full 31-node best-first growth on a
synthetic CartPole-sized transfer set.
"""
import argparse
import time

import numpy as np

from treedistill.tree import Criterion, TrainingSet, grow, kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.n, 4))
    costs = rng.exponential(size=(args.n, args.k))
    labels = costs.argmin(axis=1)
    data = TrainingSet(X, labels, costs, rng.normal(size=(args.n, args.k)))
    xs = np.sort(X[:, 0])

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (active: {kernels.backend()})")
    rows = []
    for crit in Criterion:
        r = data.rows(crit)
        rows.append((f"scan {crit.value}", lambda r=r, c=crit: kernels.split_gains(xs, r, c.code)))
    for crit in (Criterion.COST_INFO_GAIN, Criterion.VARIANCE_REDUCTION):
        rows.append((f"grow 31 {crit.value}", lambda c=crit: grow(data, c, 31)))

    print(f"{'task':34s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for label, fn in rows:
        timing = {}
        for b in backends:
            with kernels.use_backend(b):
                timing[b] = best_of(fn, args.repeat)
        line = f"{label:34s}" + "".join(f"{timing[b] * 1e3:10.2f}ms" for b in backends)
        if "compiled" in timing:
            line += f"  {timing['python'] / timing['compiled']:8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
