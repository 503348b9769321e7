import json

import pytest

from divmatch.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def machine(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "machine")
    assert code == 0
    return json.loads(out)


def test_opt_equal(capsys):
    doc = machine(capsys, "opt", "data:equal_utility_instance.json")
    assert doc["opt_star"] == 30.0
    assert doc["suggested_policy"]["alpha"] == 1.0
    assert doc["schema"] == "divmatch.results/1"
    assert len(doc["instance_digest"]) == 16


def test_opt_unequal_text(capsys):
    code, out, _ = run(capsys, "opt", "data:unequal_utility_instance.json")
    assert code == 0
    assert "OPT* = 42.4264" in out
    assert "suggested alpha = 0.74" in out


def test_malformed_instance_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "opt", str(bad))[0] == 2
    assert run(capsys, "opt", str(tmp_path / "missing.json"))[0] == 2
    bad.write_text(json.dumps({"teams": []}))
    assert run(capsys, "opt", str(bad))[0] == 2


def test_invalid_instance_exit_3(capsys, tmp_path, data_dir):
    doc = json.loads((data_dir / "toy.json").read_text())
    doc["teams"][0]["quota_min"] = 9
    p = tmp_path / "inst.json"
    p.write_text(json.dumps(doc))
    code, _, err = run(capsys, "opt", str(p))
    assert code == 3 and "quota_exceeds_capacity" in err


def test_bad_flags_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["stream", "data:toy.json", "data:toy_arrivals.csv", "--alpha", "1", "--v", "9"])
    assert exc.value.code == 2


def test_stream_toy_trace(capsys, tmp_path):
    out = tmp_path / "res.json"
    doc = machine(capsys, "stream", "data:toy.json", "data:toy_arrivals.csv", "--v", "9", "--out", str(out))
    assert json.loads(out.read_text()) == doc
    accepted = [[e["team"] for e in d["edges"] if e["accepted"]] for d in doc["decisions"][:7]]
    assert accepted == [["T1", "T2"], ["T3"], ["T1", "T2"], ["T3", "T1"], ["T2"], [], ["T3"]]
    pol = doc["policy"]
    assert pol["cutoff"] == pytest.approx(2 * pol["v"] / (pol["b"] * (1 + 2 * pol["d"])))
    assert doc["report"]["interviews_used"] == 7


def test_stream_unknown_cluster_exit_3(capsys, tmp_path):
    p = tmp_path / "arr.csv"
    p.write_text("X1,cluster:Z\n")
    assert run(capsys, "stream", "data:toy.json", str(p))[0] == 3


def test_stream_mturk_replay(capsys):
    doc = machine(capsys, "stream", "data:mturk_instance.json", "data:mturk_arrivals.csv", "--alpha", "0.7")
    assert len(doc["decisions"]) == 18
    assert doc["policy"]["d"] == 2


def test_oracle_methods(capsys):
    doc = machine(capsys, "oracle", "data:worst_case_instance.json", "data:worst_case_pool.csv")
    assert doc["value"] == pytest.approx(13.22, abs=0.01)
    doc = machine(capsys, "oracle", "data:worst_case_instance.json", "data:worst_case_pool.csv", "--method", "greedy")
    assert doc["value"] == pytest.approx(13.22, abs=0.01)
    doc = machine(capsys, "oracle", "data:toy.json", "data:toy_arrivals.csv", "--method", "fcfs")
    assert doc["interviews_used"] == 6


def test_oracle_empty_pool(capsys, tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("# nobody\n")
    assert machine(capsys, "oracle", "data:worst_case_instance.json", str(p))["value"] == 0


def test_oracle_oversize_exit_4(capsys, tmp_path):
    p = tmp_path / "pool.csv"
    p.write_text("".join(f"P{i},cluster:{'ABC'[i % 3]},1\n" for i in range(30)))
    code, _, err = run(capsys, "oracle", "data:toy.json", str(p))
    assert code == 4 and "search_space_too_large" in err


def test_simulate_equal_utility(capsys):
    doc = machine(capsys, "simulate", "data:equal_utility.json", "--runs", "20")
    assert doc["aggregate"]["median_utility"] == 30.0
    assert doc["generator"].startswith("numpy")


def test_simulate_seed_env_and_flag(capsys, monkeypatch):
    monkeypatch.setenv("DIVMATCH_SEED", "11")
    a = machine(capsys, "simulate", "data:unequal_utility.json", "--runs", "5")
    assert a["seed"] == 11
    b = machine(capsys, "simulate", "data:unequal_utility.json", "--runs", "5", "--seed", "11")
    assert a == b
    c = machine(capsys, "simulate", "data:unequal_utility.json", "--runs", "5", "--seed", "12")
    assert c["seed"] == 12


def test_simulate_theta_grid_plot_data(capsys, tmp_path, data_dir):
    cfg = json.loads((data_dir / "theta_grid.json").read_text())
    cfg.update(step=0.5, runs=3, instance=str(data_dir / "skewed_instance.json"))
    p = tmp_path / "grid.json"
    p.write_text(json.dumps(cfg))
    plot = tmp_path / "grid.csv"
    code, out, _ = run(capsys, "simulate", str(p), "--plot-data", str(plot))
    assert code == 0
    lines = plot.read_text().splitlines()
    assert lines[0] == "theta_0,theta_1,median_interviews,violation_rate"
    assert len(lines) == 7


def test_simulate_alpha_sweep_text(capsys, tmp_path, data_dir):
    cfg = json.loads((data_dir / "alpha_sweep.json").read_text())
    cfg.update(alphas=[0.7, 1.0], runs=5, instance=str(data_dir / "unequal_utility_instance.json"))
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "simulate", str(p))
    assert code == 0 and out.startswith("alpha")


def test_simulate_unknown_kind_exit_2(capsys, tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"kind": "nope", "instance": "data:toy.json", "theta": [1, 0, 0]}))
    assert run(capsys, "simulate", str(p))[0] == 2
