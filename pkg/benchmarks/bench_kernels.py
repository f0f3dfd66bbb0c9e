"""Time exact subset enumeration on the compiled and numpy backends.

    python3 benchmarks/bench_kernels.py --sizes 12 16 20 --repeat 3
"""
import argparse
import time

import numpy as np

from offloadbargain import kernels


def bench(backend, k, repeat, workers):
    rng = np.random.default_rng(k)
    d = rng.uniform(0.1, 1.0, size=k)
    a = float(np.sum(d)) + 5.0
    best = float("inf")
    value = None
    for _ in range(repeat):
        t = time.perf_counter()
        value = kernels.exact_mean_cost_diff(1, 0.3, 0.05, a, 0.7, d, workers=workers, backend=backend)
        best = min(best, time.perf_counter() - t)
    return best, value


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[12, 16, 20])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the numpy backend only")
    print(f"{'subsets':>10} " + " ".join(f"{b + ' [s]':>14}" for b in backends) + f" {'speedup':>9} {'|diff|':>10}")
    for k in args.sizes:
        res = {b: bench(b, k, args.repeat, args.workers) for b in backends}
        line = f"{2**k:>10} " + " ".join(f"{res[b][0]:>14.4f}" for b in backends)
        if "cython" in res:
            speed = res["python"][0] / res["cython"][0]
            diff = abs(res["python"][1] - res["cython"][1])
            line += f" {speed:>9.1f} {diff:>10.2e}"
        print(line)


if __name__ == "__main__":
    main()
