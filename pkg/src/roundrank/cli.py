"""``roundrank run|sweep|verify``: the command-line front end.

Exit codes: 0 success, 1 suite or runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import yaml

from .experiment import ALGORITHMS, ConfigError, ExperimentConfig, run_trials, summarize
from .verify import InsufficientData, fit_scaling_exponent

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# flag dest -> config field
_FLAG_FIELDS = {
    "algo": "algorithm",
    "n": "n",
    "k": "k",
    "r": "r",
    "noise": "noise",
    "p": "p",
    "trials": "trials",
    "seed": "base_seed",
    "scale": "constant_scale",
    "delta": "delta",
    "reps": "reps",
    "small_k_threshold": "small_k_threshold",
    "out": "out",
    "n_grid": "n_grid",
    "k_grid": "k_grid",
}

SWEEP_COLUMNS = [
    "algorithm", "n", "k", "r", "p", "trials", "successes", "rate",
    "wilson_low", "wilson_high", "mean_comparisons", "max_comparisons", "halted",
]


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _constant(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("constants look like NAME=VALUE")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad constant value {value!r}") from None


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="YAML or JSON config file; flags override its values")
    sp.add_argument("--algo", choices=sorted(ALGORITHMS))
    sp.add_argument("--n", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--noise", choices=["noiseless", "bernoulli"])
    sp.add_argument("--p", type=float, help="probability that a single comparison is correct")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int, help="base seed (overrides ROUNDRANK_SEED)")
    sp.add_argument("--scale", type=float, help="multiplier on every algorithm constant")
    sp.add_argument("--const", dest="constants", type=_constant, action="append", metavar="NAME=VALUE",
                    help="override c, c0, c1 or c2")
    sp.add_argument("--delta", type=float, help="failure probability for find_max")
    sp.add_argument("--reps", type=int, help="repetitions for repeat_lift")
    sp.add_argument("--small-k-threshold", type=float)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", help="write the record stream (run) or table (sweep) here")
    sp.add_argument("--timing", action="store_true", help="fill wall_ms (breaks byte-identical streams)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roundrank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run trials and emit one JSON record per trial")
    _add_common(run)

    sweep = sub.add_parser("sweep", help="run a grid of sizes and fit a log-log slope")
    _add_common(sweep)
    sweep.add_argument("--n-grid", type=_int_list)
    sweep.add_argument("--k-grid", type=_int_list)

    ver = sub.add_parser("verify", help="run a named verification suite")
    ver.add_argument("suite", choices=["exhaustive", "oracle", "adaptiveness", "budgets", "placement"])
    ver.add_argument("--n-max", type=int, default=8, help="largest n for the exhaustive suite")
    ver.add_argument("--seeds", type=_int_list, default=(0, 1, 2))
    ver.add_argument("--jobs", type=int, default=1)
    return parser


def _load_file(path: str) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as err:
        raise UsageError(f"cannot read config: {err}") from None
    except yaml.YAMLError as err:
        raise UsageError(f"cannot parse config: {err}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError("config file must hold a mapping")
    return data


def resolve_config(args: argparse.Namespace, env=os.environ) -> ExperimentConfig:
    """File values, then ROUNDRANK_SEED, then flags."""
    data = _load_file(args.config) if args.config else {}
    if "ROUNDRANK_SEED" in env:
        try:
            data["base_seed"] = int(env["ROUNDRANK_SEED"])
        except ValueError:
            raise UsageError("ROUNDRANK_SEED must be an integer") from None
    for dest, name in _FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            data[name] = value
    if args.constants:
        data["constants"] = {**data.get("constants", {}), **dict(args.constants)}
    if args.timing:
        data["timing"] = True
    if "n" not in data and data.get("n_grid"):
        data["n"] = max(data["n_grid"])
    try:
        return ExperimentConfig.from_mapping(data)
    except TypeError as err:
        raise UsageError(str(err)) from None


def _open_out(path: str | None):
    return open(path, "w", encoding="utf-8", newline="") if path else None


def cmd_run(cfg: ExperimentConfig, jobs: int) -> int:
    records = run_trials(cfg, jobs)
    sink = _open_out(cfg.out)
    stream = sink or sys.stdout
    try:
        for rec in records:
            stream.write(rec.to_json() + "\n")
    finally:
        if sink:
            sink.close()
    # keep stdout a clean record stream when it carries the records
    report = sys.stdout if sink else sys.stderr
    print(f"{cfg.algorithm} n={cfg.n} k={cfg.k} r={cfg.r}: {summarize(records).describe()}", file=report)
    return EXIT_OK


def sweep_points(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    if cfg.n_grid and cfg.k_grid:
        if len(cfg.n_grid) != len(cfg.k_grid):
            raise UsageError("n and k grids must have equal length when both are given")
        return [cfg.replace(n=n, k=k) for n, k in zip(cfg.n_grid, cfg.k_grid)]
    if cfg.n_grid:
        return [cfg.replace(n=n) for n in cfg.n_grid]
    if cfg.k_grid:
        return [cfg.replace(k=k) for k in cfg.k_grid]
    raise UsageError("sweep needs --n-grid or --k-grid")


def cmd_sweep(cfg: ExperimentConfig, jobs: int) -> int:
    points = sweep_points(cfg)
    if len(points) < 3:
        raise InsufficientData(f"a slope needs at least 3 grid points, got {len(points)}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    fit_input = []
    for point in points:
        s = summarize(run_trials(point, jobs))
        writer.writerow([
            point.algorithm, point.n, point.k, point.r, point.p if point.noise == "bernoulli" else 1.0,
            s.trials, s.successes, s.rate, s.low, s.high, s.mean_comparisons, s.max_comparisons, s.halted,
        ])
        x = point.n if cfg.n_grid else point.k
        fit_input.append((x, s.mean_comparisons or 0.0))
    table = buf.getvalue()
    if cfg.out:
        Path(cfg.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    fit = fit_scaling_exponent(fit_input)
    axis = "n" if cfg.n_grid else "k"
    print(f"slope vs {axis}: {fit.slope:.4f} (intercept {fit.intercept:.4f}, rms residual {fit.residual:.4f})")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from . import suites

    if args.suite == "exhaustive":
        result = suites.exhaustive_suite(n_max=args.n_max, seeds=args.seeds, jobs=args.jobs)
    else:
        result = suites.SUITES[args.suite]()
    for line in result.lines:
        print(line)
    if not result.passed and args.suite == "exhaustive":
        for name, rep in result.details.items():
            if not rep.passed:
                print(f"counterexamples for {name}:")
                print("\n".join(suites.counterexample_dump(rep)))
    print(f"suite {args.suite}: {'PASS' if result.passed else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "verify":
            if args.n_max < 1 or args.n_max > 8:
                raise UsageError("--n-max must lie in [1, 8]")
            return cmd_verify(args)
        if args.jobs < 1:
            raise UsageError("--jobs must be positive")
        cfg = resolve_config(args)
        return (cmd_run if args.command == "run" else cmd_sweep)(cfg, args.jobs)
    except (UsageError, ConfigError, InsufficientData) as err:
        print(f"roundrank: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # runtime failure
        print(f"roundrank: failed: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
