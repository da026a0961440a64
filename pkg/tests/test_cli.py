import json
import math
import os

import pytest

from pedpred import cli
from pedpred.config import RunConfig
from pedpred.evaluation import load_trajectories

STATE = "-3.5,-10,1,{:.10f}".format(math.pi / 2.0)


def run(*argv):
    return cli.main(list(argv))


def test_predict_writes_json_and_csv(tmp_path):
    out = tmp_path / "pred.json"
    code = run("predict", "--map", "builtin:intersection", "--state=" + STATE,
               "--horizon", "50", "--out", str(out))
    assert code == 0
    document = json.loads(out.read_text())
    assert document["format"] == 1
    assert document["horizon"] == 50
    assert len(document["branches"]) >= 1

    out_csv = tmp_path / "pred.csv"
    assert run("predict", "--map", "builtin:intersection", "--state=" + STATE,
               "--horizon", "20", "--out", str(out_csv)) == 0
    header = out_csv.read_text().splitlines()[0]
    assert header.startswith("branch,parent,edge,step,x,y,v,theta")


def test_predict_plot_output(tmp_path):
    svg = tmp_path / "tree.svg"
    code = run("predict", "--map", "builtin:intersection", "--state=" + STATE,
               "--horizon", "30", "--out", str(tmp_path / "p.json"),
               "--plot", str(svg))
    assert code == 0
    assert "<svg" in svg.read_text(errors="ignore")


def test_config_file_applies_and_flags_override(tmp_path):
    cfg_path = tmp_path / "run.json"
    RunConfig(horizon=30).to_json(cfg_path)
    out = tmp_path / "a.json"
    assert run("predict", "--map", "builtin:intersection", "--state=" + STATE,
               "--config", str(cfg_path), "--out", str(out)) == 0
    assert json.loads(out.read_text())["horizon"] == 30

    out = tmp_path / "b.json"
    assert run("predict", "--map", "builtin:intersection", "--state=" + STATE,
               "--config", str(cfg_path), "--horizon", "15",
               "--out", str(out)) == 0
    assert json.loads(out.read_text())["horizon"] == 15


def test_usage_errors_exit_with_code_two(tmp_path):
    with pytest.raises(SystemExit) as err:
        run()
    assert err.value.code == 2
    # malformed state vector
    assert run("predict", "--map", "builtin:intersection", "--state=1,2",
               "--out", str(tmp_path / "x.json")) == 2
    # missing map file
    assert run("predict", "--map", str(tmp_path / "nope.json"),
               "--state=" + STATE, "--out", str(tmp_path / "x.json")) == 2
    # unparseable map file
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("predict", "--map", str(bad), "--state=" + STATE,
               "--out", str(tmp_path / "x.json")) == 2
    # unknown builtin map
    assert run("predict", "--map", "builtin:atlantis", "--state=" + STATE,
               "--out", str(tmp_path / "x.json")) == 2


def test_numerical_failures_exit_with_code_four(tmp_path):
    cfg_path = tmp_path / "strict.json"
    RunConfig(dare_max_iter=2, horizon=10).to_json(cfg_path)  # starved solver
    code = run("predict", "--map", "builtin:intersection", "--state=" + STATE,
               "--config", str(cfg_path), "--out", str(tmp_path / "x.json"))
    assert code == 4


def test_empty_datasets_exit_with_code_three(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("t,x,y\n")
    assert run("evaluate", "--map", "builtin:intersection",
               "--data", str(empty), "--out", str(tmp_path / "m")) == 3

    short = tmp_path / "short.csv"
    short.write_text("t,x,y\n0.0,-3.5,-10.0\n1.0,-3.5,-9.0\n")
    assert run("evaluate", "--map", "builtin:intersection", "--data",
               str(short), "--tau", "200", "--method", "lqr",
               "--out", str(tmp_path / "m")) == 3


def test_synth_then_evaluate_both_methods(tmp_path):
    data = tmp_path / "data.csv"
    assert run("synth", "--map", "builtin:intersection", "--n", "4",
               "--crossing", "2", "--duration", "4.0", "--seed", "1",
               "--out", str(data)) == 0
    trajectories = load_trajectories(data)
    assert len(trajectories) == 4
    assert sum(t.label == "crossing" for t in trajectories) == 2

    out = tmp_path / "metrics"
    code = run("evaluate", "--map", "builtin:intersection", "--data",
               str(data), "--tau", "5,10", "--stride", "15",
               "--n-samples", "5", "--out", str(out))
    assert code == 0
    for name in ("metrics_lqr.csv", "metrics_rl.csv", "metrics.json",
                 "series_e_hat.csv", "series_delta_f.csv",
                 "series_delta_lambda.csv"):
        assert (out / name).exists(), name
    report = json.loads((out / "metrics.json").read_text())
    assert set(report["methods"]) == {"lqr", "rl"}
    summary = report["methods"]["lqr"]["summary"]
    assert [row["tau"] for row in summary] == [5, 10]
    assert all(row["n_windows"] > 0 for row in summary)
    assert os.path.isdir(out / "value_cache")


def test_bench_writes_rows_and_ratios(tmp_path):
    out = tmp_path / "bench"
    code = run("bench", "--map", "builtin:intersection", "--tau", "5",
               "--iterations", "3", "--rl-iterations", "2",
               "--n-samples", "5", "--warmup", "1", "--out", str(out))
    assert code == 0
    payload = json.loads((out / "bench.json").read_text())
    assert {row["method"] for row in payload["rows"]} == {"lqr", "rl"}
    assert "5" in payload["ratios"]
    assert (out / "bench.csv").exists()
