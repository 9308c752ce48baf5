"""Compare the compiled and numpy sweep kernels, and time a full WCR test.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from clusterlevel import kernels
from clusterlevel.montecarlo import McConfig, simulate_dataset
from clusterlevel.randomization import make_sign_group
from clusterlevel.wcr import prepare_scores, wcr_from_scores

SHAPES = [(4, 4), (8, 8), (12, 12), (20, 30)]


def sweep_problem(r, q_k, B=1000, seed=0):
    rng = np.random.default_rng(seed)
    q = r * q_k
    flips = rng.choice(np.array([-1, 1], dtype=np.int8), size=(B, q))
    cluster_of = np.repeat(np.arange(r), q_k)
    start = -np.ones(q, dtype=np.int8)
    order = rng.permutation(q)
    stops = np.arange(q + 1)
    thresholds = rng.integers(0, q, size=q + 1)
    return flips, cluster_of, r, start, order, stops, thresholds


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled extension not available; timing the numpy kernel only")

    print(f"{'r':>3} {'q_k':>4}  " + "  ".join(f"{b + ' ms':>10}" for b in backends) + "  speedup")
    for r, q_k in SHAPES:
        prob = sweep_problem(r, q_k)
        times = []
        for b in backends:
            res = kernels.sweep_counts(*prob, backend=b)
            times.append(bench(lambda b=b: kernels.sweep_counts(*prob, backend=b), args.repeat))
        if len(backends) == 2:
            np.testing.assert_array_equal(kernels.sweep_counts(*prob, backend="python"), res)
        speed = f"{times[0] / times[-1]:7.1f}x" if len(times) == 2 else ""
        print(f"{r:>3} {q_k:>4}  " + "  ".join(f"{t:>10.3f}" for t in times) + f"  {speed}")

    print()
    print("end-to-end WCR test per replication (scores, sign group, sweep)")
    for model, cell in (("1", (8, 8, 100)), ("2", (12, 12, 100))):
        cfg = McConfig(model, *cell, rho=0.5, tests=("wcr",), reps=1)
        ds = simulate_dataset(cfg, 0)

        def one():
            layout, scores = prepare_scores(ds)
            wcr_from_scores(scores, layout, make_sign_group(layout.q, 1000, 0))

        print(f"  model {model} {cell}: {bench(one, args.repeat):.2f} ms ({kernels.BACKEND} kernel)")


if __name__ == "__main__":
    main()
