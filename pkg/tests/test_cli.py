import json
from pathlib import Path

import pytest

from omegarm.cli import main
from omegarm.fixtures import running_example
from omegarm.schema import (instance_to_json, load_instance, load_policy, load_rm, policy_to_json,
                            read_json, rm_to_json)

DATA = Path(__file__).resolve().parent.parent / "instances"
PETROL = str(DATA / "petrol.json")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out) if out.strip() else None, err


def test_translate_matches_shipped_machine(capsys, tmp_path):
    code, rm, _ = report(capsys, "translate", PETROL)
    assert code == 0
    assert rm == read_json(DATA / "petrol_rm.json")
    rules = {(r["u"], r["from"], r["action"], r["to"]): (r["u_next"], r["reward"]) for r in rm["rules"]}
    assert rules[("q1", "s0", "a", "s0")] == ("q1", 1.0)
    assert rules[("q1", "s0", "b", "s1")] == ("⊥", 1.0)


def test_translate_declared_support(capsys):
    code, rm, _ = report(capsys, "translate", PETROL, "--support", "declared")
    assert code == 0 and rm == read_json(DATA / "petrol_rm.json")
    code, _, err = run(capsys, "translate", str(DATA / "recurrence.json"), "--support", "declared")
    assert code == 2 and "support" in err


def test_translate_without_pairs_warns(capsys, tmp_path):
    data = read_json(PETROL)
    data["dra"]["pairs"] = []
    path = tmp_path / "nopairs.json"
    path.write_text(json.dumps(data))
    code, rm, err = report(capsys, "translate", path)
    assert code == 0 and "warning" in err
    assert all(r["reward"] == 0 for r in rm["rules"])


def test_certify_exit_codes(capsys, tmp_path):
    assert report(capsys, "certify", PETROL, DATA / "petrol_rm.json")[0] == 0
    code, rep, _ = report(capsys, "certify", PETROL, DATA / "petrol_zero_rm.json")
    assert code == 1 and rep["checks"]["max_gain_equals_max_acceptance"] == "fail"
    general = tmp_path / "general.json"
    assert run(capsys, "translate", PETROL, "--mode", "general", "-o", general)[0] == 0
    code, _, err = run(capsys, "certify", PETROL, general)
    assert code == 3 and "cap" in err
    assert run(capsys, "certify", PETROL, general, "--cap", 100)[0] == 0


def test_malformed_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"ap": ["p"],\n  "mdp": {,}\n}')
    code, _, err = run(capsys, "translate", bad)
    assert code == 2 and "line 2" in err and "column" in err


def test_invalid_reference(capsys, tmp_path):
    data = read_json(PETROL)
    data["mdp"]["transitions"][0]["to"] = "nowhere"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    code, _, err = run(capsys, "canonical", path)
    assert code == 2 and "mdp.transitions[0].to" in err and "nowhere" in err


def test_missing_file(capsys):
    assert run(capsys, "canonical", "/nonexistent.json")[0] == 2


def test_evaluate_optimal_policy(capsys):
    code, rep, _ = report(capsys, "evaluate", PETROL, "--policy", DATA / "petrol_optimal_policy.json",
                          "--rm", DATA / "petrol_rm.json")
    assert code == 0
    assert rep["results"]["gain"]["gain"] == pytest.approx(1.0)
    assert rep["results"]["acceptance"] == pytest.approx(1.0)


def test_evaluate_memoryless_acceptance(capsys, tmp_path):
    path = tmp_path / "lazy.json"
    path.write_text(json.dumps({"kind": "memoryless", "entries": [
        {"state": "s0", "action": "a"}, {"state": "s1", "action": "b"}]}))
    code, rep, _ = report(capsys, "evaluate", PETROL, "--policy", path)
    assert code == 0 and rep["results"]["acceptance"] == 0.0


def test_decompose(capsys):
    code, rep, _ = report(capsys, "decompose", PETROL)
    res = rep["results"]
    assert code == 0
    assert res["asecs"] == [{"states": ["s0@q1"], "act": {"s0@q1": ["a"]}, "simple": True,
                             "accepting": True, "witness_pair": 0}]
    assert res["cover_index"] == {"s0@q1": 1}
    assert len(res["mecs"]) == 3
    code, rep, _ = report(capsys, "decompose", PETROL, "--exhaustive", "--covering", "naive")
    assert len(rep["results"]["product_states"]) == 6


def test_simulate(capsys):
    code, rep, _ = report(capsys, "simulate", PETROL, "--policy", DATA / "petrol_optimal_policy.json",
                          "--rm", DATA / "petrol_rm.json", "--steps", 2000, "--seed", 0)
    assert code == 0 and rep["seed"] == 0
    assert rep["results"]["average_reward"] == pytest.approx(1.0, abs=0.01)


def test_solve_alg1(capsys):
    code, rep, _ = report(capsys, "solve", PETROL, "--alg", "alg1", "--kmax", 30, "--seed", 0)
    assert code == 0
    (trial,) = rep["results"]["trials"]
    assert trial["k0"] is not None and trial["k0"] <= 30
    assert len(trial["iterations"]) == 29
    assert rep["checks"] == {"stabilized_seed_0": "pass"}


@pytest.mark.parametrize("alg", ["omega-pac", "discounted"])
def test_solve_other_algorithms(capsys, alg):
    code, rep, _ = report(capsys, "solve", PETROL, "--alg", alg, "--seed", 1, "--trials", 2,
                          "--eps", 0.2, "--delta", 0.2)
    assert code == 0
    assert [t["gain"] for t in rep["results"]["trials"]] == pytest.approx([1.0, 1.0])


def test_solve_requires_seed(capsys):
    with pytest.raises(SystemExit):
        main(["solve", PETROL, "--alg", "alg1"])


def test_output_flag(capsys, tmp_path):
    out = tmp_path / "rm.json"
    code, stdout, _ = run(capsys, "translate", PETROL, "--output", out)
    assert code == 0 and stdout == ""
    assert read_json(out) == read_json(DATA / "petrol_rm.json")


@pytest.mark.parametrize("name", ["petrol.json", "recurrence.json"])
def test_instance_round_trip(name):
    data = read_json(DATA / name)
    once = instance_to_json(*load_instance(data))
    assert instance_to_json(*load_instance(once)) == once


def test_canonical_command_is_stable(capsys, tmp_path):
    code, first, _ = report(capsys, "canonical", PETROL)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(first))
    assert report(capsys, "canonical", path)[1] == first


@pytest.mark.parametrize("name", ["petrol_rm.json", "petrol_zero_rm.json"])
def test_rm_round_trip(name):
    m, _ = running_example()
    data = read_json(DATA / name)
    assert rm_to_json(load_rm(data, m), m) == data


def test_general_rm_round_trip(capsys, tmp_path):
    path = tmp_path / "g.json"
    run(capsys, "translate", PETROL, "--mode", "general", "-o", path)
    data = read_json(path)
    assert data["domain"] == "support"
    m, _ = running_example()
    assert rm_to_json(load_rm(data, m), m) == data


def test_policy_round_trip():
    m, _ = running_example()
    data = read_json(DATA / "petrol_optimal_policy.json")
    p = load_policy(data, m.states, m.actions)
    assert policy_to_json(p, m.states, m.actions) == data


def test_incomplete_rm_rejected(capsys, tmp_path):
    data = read_json(DATA / "petrol_rm.json")
    data["rules"].pop()
    path = tmp_path / "partial.json"
    path.write_text(json.dumps(data))
    code, _, err = run(capsys, "certify", PETROL, path)
    assert code == 2 and "missing" in err
