"""Configs, result records, and the command-line front end."""

import csv
import io
import json

import pytest
from hypothesis import given, strategies as st

from roundrank import cli, suites
from roundrank.experiment import ConfigError, ExperimentConfig, ResultRecord, run_trial, run_trials, trial_seeds


def invoke(capsys, *argv, env=None, monkeypatch=None):
    if monkeypatch is not None:
        monkeypatch.delenv("ROUNDRANK_SEED", raising=False)
        for key, value in (env or {}).items():
            monkeypatch.setenv(key, value)
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- configs and records --------------------------------------------------------


def test_config_defaults_k_to_n():
    assert ExperimentConfig("rsorted1", 20).k == 20
    assert ExperimentConfig("find_max", 20).k == 1
    assert ExperimentConfig("r_round_sort", 20, k=3).k == 20


@pytest.mark.parametrize(
    "fields",
    [
        {"algorithm": "bogus", "n": 4},
        {"algorithm": "rsorted1", "n": 4, "k": 9},
        {"algorithm": "rsorted1", "n": 4, "r": 0},
        {"algorithm": "rsorted2", "n": 16, "r": 2},
        {"algorithm": "rsorted1", "n": 4, "p": 0.4},
        {"algorithm": "rsorted1", "n": 4, "constants": {"c9": 1}},
        {"algorithm": "repeat_lift", "n": 4, "reps": 4},
        {"algorithm": "rsorted1", "n": 4, "colour": "red"},
        {"n": 4},
    ],
)
def test_invalid_configs_rejected(fields):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(fields)


def test_replace_keeps_k_tracking_n():
    cfg = ExperimentConfig("rsorted1", 64)
    assert cfg.replace(n=128).k == 128
    assert ExperimentConfig("rsorted1", 64, k=8).replace(n=128).k == 8


def test_trial_seed_alone_reproduces_a_trial():
    cfg = ExperimentConfig("one_round_topk", 64, k=8, constant_scale=0.01, trials=3, base_seed=5)
    rec = run_trial(cfg, 2)
    assert rec.seed == trial_seeds(5, 2)
    assert run_trial(cfg, 2) == rec
    assert trial_seeds(5, 2) != trial_seeds(5, 3) != trial_seeds(6, 2)


records = st.builds(
    ResultRecord,
    algorithm=st.sampled_from(["rsorted1", "find_max"]),
    n=st.integers(1, 10**6),
    k=st.integers(1, 10**6),
    r=st.integers(1, 9),
    p=st.floats(0.5, 1.0),
    seed=st.integers(0, 2**64 - 1),
    rounds_used=st.integers(0, 9),
    comparisons_per_round=st.lists(st.integers(0, 10**13), max_size=5),
    total_comparisons=st.integers(0, 10**14),
    halted=st.booleans(),
    correct=st.booleans(),
    wall_ms=st.none() | st.floats(0, 1e6),
)


@given(records)
def test_records_round_trip(rec):
    line = rec.to_json()
    assert "\n" not in line
    assert ResultRecord.from_json(line) == rec


def test_record_schema_is_exact():
    rec = run_trial(ExperimentConfig("one_round_sorted_topk", 5, k=3, noise="noiseless"), 0)
    data = json.loads(rec.to_json())
    assert list(data) == [
        "algorithm", "n", "k", "r", "p", "seed", "rounds_used", "comparisons_per_round",
        "total_comparisons", "halted", "correct", "wall_ms",
    ]
    with pytest.raises(ValueError):
        ResultRecord.from_json(json.dumps({**data, "extra": 1}))


def test_serial_and_pool_give_the_same_records():
    cfg = ExperimentConfig("two_round_topk", 128, k=32, constant_scale=0.01, trials=6)
    assert run_trials(cfg, jobs=1) == run_trials(cfg, jobs=3)


# -- run ----------------------------------------------------------------------


def test_run_zero_trials(capsys, monkeypatch, tmp_path):
    out_file = tmp_path / "r.jsonl"
    code, out, _ = invoke(capsys, "run", "--algo", "find_max", "--n", "8", "--trials", "0", "--out", str(out_file),
                          monkeypatch=monkeypatch)
    assert code == 0
    assert out_file.read_text() == ""
    assert "trials=0" in out


def test_run_one_round_record(capsys, monkeypatch):
    code, out, err = invoke(capsys, "run", "--algo", "one_round_sorted_topk", "--n", "5", "--k", "3",
                            "--noise", "noiseless", "--trials", "1", monkeypatch=monkeypatch)
    assert code == 0
    rec = ResultRecord.from_json(out.strip())
    assert rec.total_comparisons == 10 and rec.correct and rec.wall_ms is None
    assert "rate=1.0000" in err


def test_run_streams_are_byte_identical(capsys, monkeypatch, tmp_path):
    args = ["run", "--algo", "two_round_sorted_topk_noisy", "--n", "64", "--k", "4", "--scale", "0.01",
            "--trials", "8", "--seed", "42"]
    paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "c.jsonl"]
    for path, jobs in zip(paths, ["1", "1", "3"]):
        assert invoke(capsys, *args, "--jobs", jobs, "--out", str(path), monkeypatch=monkeypatch)[0] == 0
    blobs = [p.read_bytes() for p in paths]
    assert blobs[0] == blobs[1] == blobs[2]
    assert len(blobs[0].splitlines()) == 8


def test_config_file_with_flag_override(capsys, monkeypatch, tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("algorithm: rsorted1\nn: 30\nk: 4\nr: 3\nnoise: noiseless\ntrials: 2\nbase_seed: 9\n")
    code, out, _ = invoke(capsys, "run", "--config", str(cfg), "--k", "6", monkeypatch=monkeypatch)
    assert code == 0
    recs = [ResultRecord.from_json(line) for line in out.splitlines()]
    assert [(r.n, r.k, r.r) for r in recs] == [(30, 6, 3)] * 2
    assert recs[0].seed == trial_seeds(9, 0)

    as_json = tmp_path / "exp.json"
    as_json.write_text(json.dumps({"algorithm": "rsorted1", "n": 30, "k": 6, "r": 3, "noise": "noiseless",
                                   "trials": 2, "base_seed": 9}))
    assert invoke(capsys, "run", "--config", str(as_json), monkeypatch=monkeypatch)[1] == out


def test_seed_from_environment_and_flag_wins(capsys, monkeypatch):
    base = ["run", "--algo", "r_round_sort", "--n", "12", "--noise", "noiseless", "--trials", "1"]
    _, env_out, _ = invoke(capsys, *base, env={"ROUNDRANK_SEED": "31"}, monkeypatch=monkeypatch)
    assert ResultRecord.from_json(env_out).seed == trial_seeds(31, 0)
    _, flag_out, _ = invoke(capsys, *base, "--seed", "4", env={"ROUNDRANK_SEED": "31"}, monkeypatch=monkeypatch)
    assert ResultRecord.from_json(flag_out).seed == trial_seeds(4, 0)


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--algo", "rsorted1", "--n", "4", "--k", "9"],
        ["run", "--algo", "nope", "--n", "4"],
        ["run", "--n", "4"],
        ["run", "--algo", "rsorted1", "--n", "4", "--config", "/nonexistent.yaml"],
        ["frobnicate"],
        ["verify", "exhaustive", "--n-max", "9"],
    ],
)
def test_usage_errors_exit_two(capsys, monkeypatch, argv):
    assert invoke(capsys, *argv, monkeypatch=monkeypatch)[0] == 2


def test_unknown_config_field_exits_two(capsys, monkeypatch, tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("algorithm: rsorted1\nn: 8\nflavour: mint\n")
    code, _, err = invoke(capsys, "run", "--config", str(cfg), monkeypatch=monkeypatch)
    assert code == 2 and "flavour" in err


def test_runtime_failure_exits_one(capsys, monkeypatch):
    def boom(cfg, jobs=1):
        raise RuntimeError("worker died")

    monkeypatch.setattr(cli, "run_trials", boom)
    code, _, err = invoke(capsys, "run", "--algo", "rsorted1", "--n", "8", "--trials", "1", monkeypatch=monkeypatch)
    assert code == 1 and "worker died" in err


# -- sweep --------------------------------------------------------------------


def test_sweep_with_two_points_exits_two(capsys, monkeypatch):
    code, _, err = invoke(capsys, "sweep", "--algo", "rsorted1", "--n-grid", "64,128", "--trials", "2",
                          monkeypatch=monkeypatch)
    assert code == 2 and "3 grid points" in err


def test_sweep_table_and_slope(capsys, monkeypatch, tmp_path):
    table = tmp_path / "sweep.csv"
    code, out, _ = invoke(capsys, "sweep", "--algo", "one_round_sorted_topk", "--noise", "noiseless",
                          "--n-grid", "16,32,64,128", "--trials", "2", "--out", str(table), monkeypatch=monkeypatch)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(table.read_text())))
    assert [int(r["n"]) for r in rows] == [16, 32, 64, 128]
    assert [float(r["mean_comparisons"]) for r in rows] == [n * (n - 1) / 2 for n in (16, 32, 64, 128)]
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    slope = float(out.strip().splitlines()[-1].split(":")[1].split()[0])
    assert 2.0 < slope < 2.1


def test_sweep_over_k(capsys, monkeypatch):
    code, out, _ = invoke(capsys, "sweep", "--algo", "one_round_sorted_topk_noisy", "--n", "32", "--scale", "0.01",
                          "--k-grid", "2,4,8", "--trials", "1", monkeypatch=monkeypatch)
    assert code == 0 and "slope vs k" in out


# -- verify -------------------------------------------------------------------


def test_verify_oracle_passes(capsys, monkeypatch):
    code, out, _ = invoke(capsys, "verify", "oracle", monkeypatch=monkeypatch)
    assert code == 0 and "suite oracle: PASS" in out


def test_verify_small_exhaustive(capsys, monkeypatch):
    code, out, _ = invoke(capsys, "verify", "exhaustive", "--n-max", "4", monkeypatch=monkeypatch)
    assert code == 0 and out.count("0 failures") == len(suites.EXHAUSTIVE_ALGORITHMS)


def test_verify_failure_dumps_counterexamples(capsys, monkeypatch):
    from test_verify import SwapMutant

    monkeypatch.setitem(suites.EXHAUSTIVE_ALGORITHMS, "mutant", (lambda n, k, s: SwapMutant(n, k), None))
    code, out, _ = invoke(capsys, "verify", "exhaustive", "--n-max", "3", "--seeds", "0", monkeypatch=monkeypatch)
    assert code == 1
    assert "counterexamples for mutant" in out and "rank_of=" in out
