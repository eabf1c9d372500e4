import json
import sys
from pathlib import Path

import pytest

from gp_autotune.cli import (
    ConfigError,
    ExperimentSpec,
    aggregate_from_traces,
    build_source,
    infer_space_from_csv,
    main,
)
from gp_autotune.space import CATEGORICAL, INTEGER_GRID


DATASET_CSV = """a,b,latency
1,10,5.0
1,20,6.0
2,10,7.0
2,20,8.0
1,10,5.2
"""


@pytest.fixture
def dataset_file(tmp_path):
    p = tmp_path / "data.csv"
    p.write_text(DATASET_CSV)
    return p


def test_infer_space_from_csv(dataset_file):
    sp = infer_space_from_csv(str(dataset_file))
    assert sp.names == ("a", "b")
    assert sp.params[0].options == (1, 2)
    assert sp.params[1].options == (10, 20)
    assert all(p.kind == INTEGER_GRID for p in sp.params)


def test_infer_space_categorical(tmp_path):
    p = tmp_path / "cat.csv"
    p.write_text("mode,latency\nkryo,1.0\njava,2.0\n")
    sp = infer_space_from_csv(str(p))
    assert sp.params[0].kind == CATEGORICAL
    assert sp.params[0].options == ("java", "kryo")


def test_spec_validation_errors():
    with pytest.raises(ConfigError):
        ExperimentSpec().validate()  # no source selected
    with pytest.raises(ConfigError):
        ExperimentSpec(function="nope").validate()
    with pytest.raises(ConfigError):
        ExperimentSpec(function="branin", algorithms=("bogus",)).validate()
    with pytest.raises(ConfigError):
        ExperimentSpec(function="branin", kappa="sometimes:1").validate()
    ExperimentSpec(function="branin").validate()


def test_tune_writes_all_artifacts(tmp_path):
    out = tmp_path / "run"
    rc = main(
        [
            "tune",
            "--function", "branin",
            "--grid", "12,12",
            "--budget", "20",
            "--init-design", "5",
            "--algorithms", "bo4co,random",
            "--replications", "2",
            "--seed", "7",
            "--out", str(out),
        ]
    )
    assert rc == 0
    for algo in ("bo4co", "random"):
        for rep in range(2):
            assert (out / "traces" / algo / f"rep{rep:03d}.csv").exists()
            assert (out / "overhead" / algo / f"rep{rep:03d}.csv").exists()
        assert (out / f"distance_{algo}.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["space"]["size"] == 144
    assert summary["ground_truth"]["value"] > 0
    assert len(summary["algorithms"]["bo4co"]) == 2
    assert summary["algorithms"]["bo4co"][0]["hyperparams"]["kernel_family"] == "matern12"
    assert summary["algorithms"]["bo4co"][0]["seed"] == 7
    assert summary["algorithms"]["bo4co"][1]["seed"] == 8


def test_tune_deterministic_trace_bytes(tmp_path):
    args = [
        "tune",
        "--function", "dixon2",
        "--grid", "9,9",
        "--noise", "0.2",
        "--budget", "15",
        "--init-design", "4",
        "--algorithms", "bo4co,sa",
        "--replications", "2",
        "--seed", "3",
    ]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    for rel in [
        "traces/bo4co/rep000.csv",
        "traces/bo4co/rep001.csv",
        "traces/sa/rep000.csv",
        "distance_bo4co.csv",
    ]:
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel
    # summaries agree except for the echoed output path itself
    sum_a = json.loads((out_a / "summary.json").read_text())
    sum_b = json.loads((out_b / "summary.json").read_text())
    sum_a["spec"].pop("out")
    sum_b["spec"].pop("out")
    assert sum_a == sum_b


def test_reaggregation_reproduces_distance_files(tmp_path):
    out = tmp_path / "run"
    rc = main(
        [
            "tune",
            "--function", "branin",
            "--grid", "10,10",
            "--budget", "18",
            "--init-design", "5",
            "--algorithms", "random,hill",
            "--replications", "3",
            "--seed", "11",
            "--out", str(out),
        ]
    )
    assert rc == 0
    originals = {
        p.name: p.read_bytes() for p in out.glob("distance_*.csv")
    }
    for p in out.glob("distance_*.csv"):
        p.unlink()
    aggregate_from_traces(out)
    rebuilt = {p.name: p.read_bytes() for p in out.glob("distance_*.csv")}
    assert rebuilt == originals


def test_tune_with_dataset_playback(dataset_file, tmp_path):
    out = tmp_path / "run"
    rc = main(
        [
            "tune",
            "--dataset", str(dataset_file),
            "--budget", "4",
            "--init-design", "2",
            "--algorithms", "random",
            "--seed", "0",
            "--out", str(out),
        ]
    )
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    # full enumeration: the best is the dataset's aggregate minimum
    assert summary["algorithms"]["random"][0]["best_y"] == pytest.approx(5.1)


def test_tune_with_config_file_and_flag_override(tmp_path, dataset_file):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(
        "function: branin\ngrid: [8, 8]\nbudget: 12\ninit_design: 4\n"
        "algorithms: [random]\nreplications: 1\nseed: 5\n"
    )
    out = tmp_path / "cfgrun"
    rc = main(["tune", "--config", str(cfg), "--budget", "10", "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["spec"]["budget"] == 10  # flag wins
    assert summary["spec"]["function"] == "branin"


def test_tune_jobs_parallel_matches_serial(tmp_path):
    base = [
        "tune",
        "--function", "branin",
        "--grid", "10,10",
        "--budget", "14",
        "--init-design", "4",
        "--algorithms", "random",
        "--replications", "2",
        "--seed", "19",
    ]
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    assert main(base + ["--jobs", "1", "--out", str(serial)]) == 0
    assert main(base + ["--jobs", "2", "--out", str(parallel)]) == 0
    for rep in range(2):
        rel = f"traces/random/rep{rep:03d}.csv"
        assert (serial / rel).read_bytes() == (parallel / rel).read_bytes()


def test_exit_code_2_on_config_errors(tmp_path, capsys):
    assert main(["tune", "--function", "bogus", "--out", str(tmp_path)]) == 2
    assert main(["tune", "--out", str(tmp_path)]) == 2
    assert main(["screen", "--dataset", str(tmp_path / "missing.csv")]) == 2
    err = capsys.readouterr().err
    assert "error" in err


def test_exit_code_3_on_broken_external_source(tmp_path):
    space_yaml = tmp_path / "space.yaml"
    space_yaml.write_text(
        "parameters:\n  - name: x\n    kind: integer-grid\n    options: [1, 2, 3, 4]\n"
    )
    rc = main(
        [
            "tune",
            "--command", "/nonexistent/measure-thing",
            "--space", str(space_yaml),
            "--budget", "3",
            "--init-design", "2",
            "--algorithms", "random",
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 3


def test_tune_external_command_source(tmp_path):
    space_yaml = tmp_path / "space.yaml"
    space_yaml.write_text(
        "parameters:\n  - name: x\n    kind: integer-grid\n    options: [0, 1, 2, 3, 4]\n"
    )
    code = "import sys; v=dict(a.split('=') for a in sys.argv[1:]); print((float(v['x'])-3)**2)"
    out = tmp_path / "out"
    rc = main(
        [
            "tune",
            "--command", f"{sys.executable} -c \"{code}\"",
            "--space", str(space_yaml),
            "--budget", "5",
            "--init-design", "2",
            "--algorithms", "random",
            "--seed", "2",
            "--out", str(out),
        ]
    )
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["algorithms"]["random"][0]["best_y"] == pytest.approx(0.0)
    assert summary["ground_truth"] is None  # external sources have no oracle
    assert not list(out.glob("distance_*.csv"))


def test_screen_outputs_ranking_and_snr(dataset_file, tmp_path, capsys):
    out = tmp_path / "screen"
    rc = main(
        ["screen", "--dataset", str(dataset_file), "--max-subset", "2", "--out", str(out)]
    )
    assert rc == 0
    text = capsys.readouterr().out
    assert "merit ranking" in text
    assert "signal-to-noise" in text
    assert (out / "merit_ranking.csv").exists()
    assert (out / "snr.csv").exists()
    ranking = (out / "merit_ranking.csv").read_text().splitlines()
    assert len(ranking) == 1 + 3  # header + C(2,1) + C(2,2)


def test_screen_empty_dataset_exit_2(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("a,latency\n")
    assert main(["screen", "--dataset", str(p)]) == 2


def test_overhead_report(tmp_path, capsys):
    out = tmp_path / "oh"
    rc = main(
        [
            "overhead",
            "--function", "branin",
            "--grid", "10,10",
            "--budget", "16",
            "--init-design", "6",
            "--seed", "1",
            "--out", str(out),
        ]
    )
    assert rc == 0
    assert "per-iteration overhead" in capsys.readouterr().out
    lines = (out / "overhead" / "bo4co" / "rep000.csv").read_text().splitlines()
    assert lines[0] == "t,overhead_ms"
    assert len(lines) == 1 + 10  # loop iterations only


def test_overhead_empty_when_budget_is_all_design(tmp_path, capsys):
    rc = main(
        [
            "overhead",
            "--function", "branin",
            "--grid", "8,8",
            "--budget", "6",
            "--init-design", "6",
            "--out", str(tmp_path / "oh"),
        ]
    )
    assert rc == 0
    assert "no loop iterations" in capsys.readouterr().out
