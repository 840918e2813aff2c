"""Exhaustive noiseless check over every ranking of n <= n_max items, with timing per algorithm.

    python3 scripts/exhaustive_check.py --n-max 7 --jobs 8
"""

import argparse
import os
import time

from roundrank.suites import EXHAUSTIVE_ALGORITHMS, counterexample_dump, exhaustive_suite


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, default=8)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--only", nargs="*", choices=sorted(EXHAUSTIVE_ALGORITHMS), default=None)
    args = ap.parse_args(argv)

    total = 0.0
    for name in args.only or EXHAUSTIVE_ALGORITHMS:
        start = time.perf_counter()
        result = exhaustive_suite(args.n_max, tuple(args.seeds), args.jobs, names=[name])
        spent = time.perf_counter() - start
        total += spent
        print(f"{result.lines[0]}  [{spent:.1f}s]", flush=True)
        if not result.passed:
            print("\n".join(counterexample_dump(result.details[name])))
    print(f"total {total:.1f}s on {args.jobs} worker(s)")


if __name__ == "__main__":
    main()
