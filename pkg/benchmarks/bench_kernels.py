"""Time the compiled and pure-Python line-of-sight kernels on random scenes.

    python benchmarks/bench_kernels.py --sizes 32 64 128 --repeat 3
"""

import argparse
import time

import numpy as np

from tire_rme.kernels import backends


def random_mask(n, density, seed):
    rng = np.random.default_rng(seed)
    return (rng.random((n, n)) < density).astype(np.uint8)


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--density", type=float, default=0.2)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)

    impls = backends()
    if "cython" not in impls:
        print("compiled backend not built; timing the Python fallback only")
    print(f"{'kernel':<11} {'N':>5} " + " ".join(f"{k:>12}" for k in impls) + f" {'speedup':>9}")
    for n in a.sizes:
        mask = random_mask(n, a.density, a.seed)
        tx, ty = n // 3, n // 2
        mask[ty, tx] = 0
        outs, times = {}, {}
        for name, mod in impls.items():
            outs[name] = mod.los_counts(mask, tx, ty)
            times[name] = best_of(lambda: mod.los_counts(mask, tx, ty), a.repeat)
        ref = outs[next(iter(outs))]
        for name, (free, total) in outs.items():
            if not (np.array_equal(free, ref[0]) and np.array_equal(total, ref[1])):
                raise SystemExit(f"backend {name} disagrees at N={n}")
        _row("los_counts", n, times)

        rng = np.random.default_rng(a.seed + n)
        pts = rng.integers(0, n, size=(2000, 4))
        for name, mod in impls.items():
            times[name] = best_of(lambda: [mod.los_pixels(*map(int, p)) for p in pts], a.repeat)
        _row("los_pixels", n, times)


def _row(kernel, n, times):
    cells = " ".join(f"{times[k] * 1e3:>10.2f}ms" for k in times)
    speed = times["python"] / times["cython"] if "cython" in times else float("nan")
    print(f"{kernel:<11} {n:>5} {cells} {speed:>8.1f}x")


if __name__ == "__main__":
    main()
