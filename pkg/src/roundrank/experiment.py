"""Experiment configs, the algorithm registry, and seeded trial execution."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import noiseless as nl
from . import noisy as nz
from .harness import RoundAlgorithm, execute
from .model import InvalidParameter, NoiseModel, make_ground_truth
from .noiseless import PartitionInconsistency
from .verify import SuccessEstimate, check_output

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "ExperimentConfig",
    "ResultRecord",
    "Summary",
    "build_algorithm",
    "run_trial",
    "run_trials",
    "summarize",
    "trial_seeds",
]


class ConfigError(ValueError):
    pass


def _consts(cfg: "ExperimentConfig") -> nz.AlgoConstants:
    return nz.AlgoConstants(**cfg.constants, constant_scale=cfg.constant_scale)


def _lifted(cfg, seed):
    inner = nl.NoiselessSortedTopK(cfg.n, cfg.k, cfg.r, seed)
    return nz.RepeatLift(inner, cfg.reps or nz.lift_reps(cfg.n, _consts(cfg)))


ALGORITHMS: dict[str, Callable[["ExperimentConfig", int], RoundAlgorithm]] = {
    "one_round_sorted_topk": lambda c, s: nl.one_round_sorted_topk(c.n, c.k, s),
    "rsorted1": lambda c, s: nl.rsorted1(c.n, c.k, c.r, s),
    "rsorted2": lambda c, s: nl.rsorted2(c.n, c.k, c.r, s),
    "noiseless_dispatch": lambda c, s: nl.noiseless_sorted_topk(c.n, c.k, c.r, s),
    "r_round_sort": lambda c, s: nl.r_round_sort(c.n, c.r, s),
    "find_max": lambda c, s: nz.find_max(c.n, c.delta, _consts(c), s),
    "one_round_topk": lambda c, s: nz.one_round_topk(c.n, c.k, _consts(c), s),
    "two_round_topk": lambda c, s: nz.two_round_topk(c.n, c.k, _consts(c), s),
    "one_round_sorted_topk_noisy": lambda c, s: nz.one_round_sorted_topk_noisy(c.n, c.k, _consts(c), s),
    "two_round_sorted_topk_noisy": lambda c, s: nz.two_round_sorted_topk_noisy(
        c.n, c.k, _consts(c), s, small_k_threshold=c.small_k_threshold
    ),
    "repeat_lift": _lifted,
}

# algorithms whose k is fixed by the task
_FIXED_K = {"r_round_sort": lambda n: n, "find_max": lambda n: 1}


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    n: int
    k: int | None = None  # None means k = n (or the task's fixed k)
    r: int = 2
    noise: str = "bernoulli"
    p: float = 2.0 / 3.0
    trials: int = 1
    base_seed: int = 0
    constant_scale: float = 1.0
    constants: dict = field(default_factory=dict)
    delta: float = 1.0 / 9.0
    reps: int | None = None
    small_k_threshold: float | None = None
    timing: bool = False
    out: str | None = None
    n_grid: tuple | None = None
    k_grid: tuple | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {sorted(ALGORITHMS)}")
        for name in ("n", "r", "trials", "base_seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer")
        if self.k is None or self.algorithm in _FIXED_K:
            fixed = _FIXED_K.get(self.algorithm, lambda n: n)
            object.__setattr__(self, "k", fixed(self.n))
        if self.n < 1:
            raise ConfigError("n must be positive")
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"k must lie in [1, {self.n}]")
        if self.r < 1:
            raise ConfigError("r must be at least 1")
        if self.trials < 0:
            raise ConfigError("trials must be non-negative")
        if self.noise not in ("noiseless", "bernoulli"):
            raise ConfigError("noise must be 'noiseless' or 'bernoulli'")
        if not self.constant_scale > 0:
            raise ConfigError("constant_scale must be positive")
        unknown = set(self.constants) - {"c", "c0", "c1", "c2"}
        if unknown:
            raise ConfigError(f"unknown constants {sorted(unknown)}")
        if self.reps is not None and (self.reps < 1 or self.reps % 2 == 0):
            raise ConfigError("reps must be a positive odd integer")
        object.__setattr__(self, "constants", dict(self.constants))
        for name in ("n_grid", "k_grid"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(int(v) for v in value))
        try:
            self.noise_model()
            self.build(0)
        except InvalidParameter as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "algorithm" not in data or "n" not in data:
            raise ConfigError("config needs at least 'algorithm' and 'n'")
        return cls(**data)

    def replace(self, **changes) -> "ExperimentConfig":
        data = dataclasses.asdict(self)
        if "n" in changes and "k" not in changes and self.algorithm not in _FIXED_K:
            # k tracked n unless it was set independently
            if data["k"] == data["n"]:
                data["k"] = None
        data.update(changes)
        return ExperimentConfig(**data)

    def noise_model(self) -> NoiseModel:
        return NoiseModel.noiseless() if self.noise == "noiseless" else NoiseModel("bernoulli", self.p)

    def build(self, seed: int) -> RoundAlgorithm:
        return build_algorithm(self, seed)


def build_algorithm(cfg: ExperimentConfig, seed: int) -> RoundAlgorithm:
    return ALGORITHMS[cfg.algorithm](cfg, seed)


@dataclass(frozen=True)
class ResultRecord:
    algorithm: str
    n: int
    k: int
    r: int
    p: float
    seed: int
    rounds_used: int
    comparisons_per_round: list
    total_comparisons: int
    halted: bool
    correct: bool
    wall_ms: float | None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        data = json.loads(line)
        names = [f.name for f in dataclasses.fields(cls)]
        if sorted(data) != sorted(names):
            raise ValueError("record fields do not match the schema")
        return cls(**data)


def trial_seeds(base_seed: int, trial: int) -> int:
    """64-bit seed of one trial; it alone reproduces the trial."""
    ss = np.random.SeedSequence([base_seed & (2**64 - 1), trial])
    return int(ss.generate_state(1, np.uint64)[0])


def _split(seed: int) -> tuple[int, int, int]:
    gt_seed, alg_seed, run_seed = np.random.SeedSequence(seed).generate_state(3, np.uint64)
    return int(gt_seed), int(alg_seed), int(run_seed)


def run_trial(cfg: ExperimentConfig, trial: int) -> ResultRecord:
    seed = trial_seeds(cfg.base_seed, trial)
    gt_seed, alg_seed, run_seed = _split(seed)
    gt = make_ground_truth(cfg.n, gt_seed)
    alg = cfg.build(alg_seed)
    noise = cfg.noise_model()
    start = time.perf_counter()
    try:
        stats = execute(alg, gt, noise, run_seed=run_seed, keep_transcript=False)
        correct = check_output(alg.task, stats.output, gt, alg.k)
    except PartitionInconsistency:
        # only reachable when noisy majorities contradict each other
        stats = None
        correct = False
    wall = (time.perf_counter() - start) * 1000 if cfg.timing else None
    per_round = list(stats.comparisons_per_round) if stats else []
    return ResultRecord(
        cfg.algorithm,
        cfg.n,
        alg.k,
        cfg.r,
        1.0 if noise.is_noiseless else noise.p,
        seed,
        len(per_round),
        per_round,
        int(sum(per_round)),
        bool(stats.halted) if stats else False,
        bool(correct),
        wall,
    )


def _run_one(args):
    cfg, trial = args
    return run_trial(cfg, trial)


def run_trials(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRecord]:
    """All trials of ``cfg`` in trial order, optionally on a process pool."""
    work = [(cfg, i) for i in range(cfg.trials)]
    if jobs <= 1 or len(work) <= 1:
        return [_run_one(w) for w in work]
    import multiprocessing

    with multiprocessing.get_context("fork").Pool(jobs) as pool:
        return list(pool.imap(_run_one, work, chunksize=max(1, len(work) // (4 * jobs))))


@dataclass(frozen=True)
class Summary:
    trials: int
    successes: int
    rate: float | None
    low: float
    high: float
    mean_comparisons: float | None
    max_comparisons: int | None
    halted: int

    def describe(self) -> str:
        if not self.trials:
            return "trials=0"
        return (
            f"trials={self.trials} success={self.successes} rate={self.rate:.4f} "
            f"wilson95=[{self.low:.4f}, {self.high:.4f}] mean_comparisons={self.mean_comparisons:.1f} "
            f"max_comparisons={self.max_comparisons} halted={self.halted}"
        )


def summarize(records) -> Summary:
    records = list(records)
    est = SuccessEstimate.from_flags(r.correct for r in records)
    totals = [r.total_comparisons for r in records]
    return Summary(
        est.trials,
        est.successes,
        est.rate if est.trials else None,
        est.low,
        est.high,
        float(np.mean(totals)) if totals else None,
        int(max(totals)) if totals else None,
        sum(r.halted for r in records),
    )
