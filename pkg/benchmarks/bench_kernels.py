"""Compiled vs pure-Python matrix-game kernels.

Usage: python3 benchmarks/bench_kernels.py [--sizes 2,5,10] [--count 2000]
"""

import argparse
import time

import numpy as np

from secure_game.matrix_game import BACKENDS, solve_zero_sum, solve_zero_sum_batch


def _best(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="2,5,10")
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    backends = sorted(BACKENDS)
    print(f"{'size':>5} {'mode':>6} " + " ".join(f"{b + ' us/game':>18}" for b in backends) + f" {'speedup':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        Qs = rng.normal(size=(args.count, n, n))
        for mode in ("single", "batch"):
            times = {}
            for b in backends:
                if mode == "single":
                    t = _best(lambda: [solve_zero_sum(Q, backend=b) for Q in Qs], args.repeats)
                else:
                    t = _best(lambda: solve_zero_sum_batch(Qs, backend=b), args.repeats)
                times[b] = 1e6 * t / args.count
            speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
            print(f"{n:>5} {mode:>6} " + " ".join(f"{times[b]:>18.2f}" for b in backends) + f" {speed:>8.1f}")
            # both backends must agree on the values
            if "compiled" in times:
                va = solve_zero_sum_batch(Qs[:50], backend="compiled")[0]
                vb = solve_zero_sum_batch(Qs[:50], backend="python")[0]
                assert np.allclose(va, vb, atol=1e-9), "backends disagree"


if __name__ == "__main__":
    main()
