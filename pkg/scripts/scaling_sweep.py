"""Mean comparison counts over a size grid, with fitted log-log slopes.

    python3 scripts/scaling_sweep.py --trials 200 --out sweep.csv
"""

import argparse
import csv
import os
import sys

from roundrank.experiment import ExperimentConfig, run_trials, summarize
from roundrank.verify import fit_scaling_exponent

# (algorithm, r, k as a function of n, expected slope)
SERIES = [
    ("rsorted1", 2, lambda n: n, 1.5),
    ("rsorted1", 3, lambda n: n, 4 / 3),
    ("r_round_sort", 2, lambda n: n, 1.5),
    ("r_round_sort", 3, lambda n: n, 4 / 3),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--min-exp", type=int, default=8)
    ap.add_argument("--max-exp", type=int, default=13)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)

    sizes = [2**e for e in range(args.min_exp, args.max_exp + 1)]
    rows = []
    for algo, r, k_of, expected in SERIES:
        points = []
        for n in sizes:
            cfg = ExperimentConfig(algo, n, k=k_of(n), r=r, noise="noiseless", trials=args.trials, base_seed=args.seed)
            s = summarize(run_trials(cfg, args.jobs))
            rows.append([algo, r, n, cfg.k, s.trials, s.rate, s.mean_comparisons, s.max_comparisons])
            points.append((n, s.mean_comparisons))
        fit = fit_scaling_exponent(points)
        note = f" (expected {expected:.3f})" if expected else ""
        print(f"{algo} r={r}: slope {fit.slope:.3f}{note}, rms residual {fit.residual:.3f}", file=sys.stderr)

    sink = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["algorithm", "r", "n", "k", "trials", "rate", "mean_comparisons", "max_comparisons"])
    writer.writerows(rows)
    if args.out:
        sink.close()


if __name__ == "__main__":
    main()
