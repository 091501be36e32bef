"""Compare the compiled and numpy kernel backends.

Times the raw kernels on random inputs and a full depth-2 solve on a
German-shaped population, checking that both backends agree.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from recourse_trees import kernels
from recourse_trees.predictor import train_logistic
from recourse_trees.pipeline import prepare
from recourse_trees.solver import SolverConfig, solve
from recourse_trees.synth import german_like


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def bench_row_fronts(mod, rng, repeat):
    R, A, L = 400, 2000, 60
    cost = rng.integers(0, 1000, (R, A), dtype=np.int64)
    loss = rng.integers(0, L + 1, (R, A), dtype=np.int64)
    return best_of(lambda: mod.row_fronts(cost, loss, L), repeat)


def bench_merge(mod, rng, repeat):
    M = 400
    c1 = np.sort(rng.integers(0, 10**6, 300))
    l1 = np.sort(rng.choice(M // 2, 300))[::-1].copy()
    c2 = np.sort(rng.integers(0, 10**6, 300))
    l2 = np.sort(rng.choice(M // 2, 300))[::-1].copy()

    def run():
        acc = [np.full(M, np.iinfo(np.int64).max), np.zeros(M, np.int64),
               np.zeros(M, np.int64), np.zeros(M, np.int64)]
        for t in range(20):
            mod.merge_into(*acc, c1, l1, c2, l2, t)
        return acc[0]

    return best_of(run, repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = {}
    for name in ("cython", "python"):
        try:
            backends[name] = kernels.load(name)
        except ImportError:
            print(f"{name}: unavailable")

    rng_seed = 0
    print(f"{'benchmark':<28}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    rows = {}
    for label, fn in (("row_fronts 400x2000", bench_row_fronts), ("merge_into 20x300x300", bench_merge)):
        res = {b: fn(m, np.random.default_rng(rng_seed), args.repeat) for b, m in backends.items()}
        outs = [r[1] for r in res.values()]
        if len(outs) == 2:
            a, b = outs
            same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
            assert same, f"{label}: backends disagree"
        rows[label] = {b: r[0] for b, r in res.items()}

    data = german_like(1000, seed=0)
    prep = prepare(data, train_logistic(data), k=3)
    cfg = SolverConfig(max_depth=2, max_nodes=3, min_leaf_size=50)
    res = {}
    for b, m in backends.items():
        res[b] = best_of(lambda m=m: solve(prep.cache, prep.view, cfg, backend=m), args.repeat)
    if len(res) == 2:
        fa, fb = (r[1].front.values() for r in res.values())
        assert fa == fb, "solve fronts differ between backends"
    rows[f"solve d=2 ({prep.cache.shape[0]}x{prep.cache.shape[1]})"] = {b: r[0] for b, r in res.items()}

    for label, t in rows.items():
        line = f"{label:<28}" + "".join(f"{t[b] * 1e3:>10.1f}ms" for b in backends)
        if len(t) == 2:
            line += f"{t['python'] / t['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
