"""Distribution of walk-placement errors in two-round top-k, against the 3 * 0.9^d envelope.

    python3 scripts/placement_tail.py --n 4096 --c1 1
"""

import argparse

from roundrank import noisy as nz
from roundrank.suites import placement_tail


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--c1", type=float, default=None, help="per-pair repetitions in round one (default: full constant)")
    ap.add_argument("--d-max", type=int, default=10)
    args = ap.parse_args(argv)

    consts = nz.AlgoConstants(c1=args.c1, c2=1) if args.c1 else None
    tail = placement_tail(args.n, tuple(args.seeds), consts, args.d_max)
    print("d,frac_at_least_d,envelope")
    for d, frac in enumerate(tail):
        print(f"{d},{frac:.6f},{3 * 0.9**d:.6f}")


if __name__ == "__main__":
    main()
