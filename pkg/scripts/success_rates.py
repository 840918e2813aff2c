"""Success rates of the noisy algorithms at their reference sizes, with Wilson intervals.

    python3 scripts/success_rates.py --quick
"""

import argparse
import os

from roundrank.experiment import ExperimentConfig, run_trials, summarize

REFERENCE = [
    dict(algorithm="find_max", n=64, trials=2000),
    dict(algorithm="one_round_topk", n=256, k=64, trials=500),
    dict(algorithm="two_round_topk", n=4096, k=2048, trials=200),
    dict(algorithm="one_round_sorted_topk_noisy", n=128, k=8, trials=500),
    dict(algorithm="two_round_sorted_topk_noisy", n=4096, k=2, trials=300),
    dict(algorithm="repeat_lift", n=256, k=32, r=2, trials=200),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="a tenth of the trials")
    ap.add_argument("--p", type=float, default=2 / 3)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args(argv)

    for entry in REFERENCE:
        entry = dict(entry, p=args.p, constant_scale=args.scale, base_seed=args.seed)
        if args.quick:
            entry["trials"] = max(30, entry["trials"] // 10)
        cfg = ExperimentConfig(**entry)
        s = summarize(run_trials(cfg, args.jobs))
        print(f"{cfg.algorithm:30s} n={cfg.n:<5d} k={cfg.k:<5d} {s.describe()}")


if __name__ == "__main__":
    main()
