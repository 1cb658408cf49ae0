import csv
import json

import pytest

from rpmsim.cli import main
from rpmsim.endpoints import FlowSpec
from rpmsim.sim.config import save_config
from rpmsim.sim.scenarios import fairness_scenario, single_path
from rpmsim.units import MS


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("argv", [[], ["bogus"], ["stability", "--c", "1000"], ["experiment", "fairness"]])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o.csv")]) == 1


def test_invalid_config_exits_one(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"nodes": [{"name": "a", "kind": "router"}], "links": []}))
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o.csv")]) == 1


def test_bad_experiment_parameters_exit_one(tmp_path):
    assert main(["experiment", "fairness", "--mode", "none", "--out", str(tmp_path / "o.csv")]) == 1


def test_runtime_failure_exits_two(tmp_path):
    path = tmp_path / "cfg.json"
    save_config(fairness_scenario(2, "rpm", duration=300 * MS), path)
    assert main(["simulate", str(path), "--out", str(tmp_path / "o.csv"), "--until-ms", "-5"]) == 2


def test_stability_single_and_sweep(tmp_path):
    one = tmp_path / "one.csv"
    assert main(["stability", "--c", "1000", "--d", "0.04", "--ds", "0.02", "--out", str(one)]) == 0
    [row] = rows(one)
    assert row["verdict"] == "unstable" and float(row["eta"]) < 0
    sweep = tmp_path / "sweep.csv"
    assert main(["stability", "--c", "1000", "--d", "0.04", "--sweep", "ds", "--out", str(sweep)]) == 0
    got = rows(sweep)
    assert len(got) == 9
    assert float(got[0]["d_s"]) == pytest.approx(0.004) and float(got[-1]["d_s"]) == pytest.approx(0.036)


def test_simulate_writes_flows_and_events(tmp_path):
    cfg = single_path(mode="rpm", sim_duration=500 * MS)
    cfg.flows = [FlowSpec("H1", "H2", None), FlowSpec("H1", "H2", 20)]
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    out, ev = tmp_path / "flows.csv", tmp_path / "events.csv"
    assert main(["simulate", str(path), "--out", str(out), "--events", str(ev)]) == 0
    flows = rows(out)
    assert len(flows) == 2 and flows[1]["completed_ns"]
    assert rows(ev) == []
    save_config(fairness_scenario(2, "rpm", duration=2000 * MS, buffer_limit=37_500), path)
    assert main(["simulate", str(path), "--out", str(out), "--events", str(ev)]) == 0
    assert len(rows(out)) == 10
    kinds = {r["kind"] for r in rows(ev)}
    assert {"signal", "ece_mark"} <= kinds and "ce_mark" not in kinds


def test_fairness_experiment_is_reproducible(tmp_path):
    argv = ["experiment", "fairness", "--mode", "rpm", "--duration", "2", "--seed", "4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    got = rows(a)
    assert sum(1 for r in got if r["flow"].isdigit()) == 10
    assert any(r["flow"] == "J" for r in got)
