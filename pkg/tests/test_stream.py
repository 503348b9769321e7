import json
import math

import pytest

from divmatch.core import InvalidInstance, KnapsackSpec, Instance, Person, TeamSpec, uniform_instance
from divmatch.objective import total_value
from divmatch.optimum import ThresholdPolicy, alpha_policy
from divmatch.stream import Engine, EngineClosed, interviews_to_fill, new_engine, process_arrival, run_stream

from conftest import people

TOY_POLICY = ThresholdPolicy(1.0, 9.0, 3, 3.0)


def test_new_engine_cutoffs(equal_instance, toy):
    eng = new_engine(equal_instance, alpha_policy(equal_instance, 1.0))
    assert eng.cutoff == pytest.approx(0.952, abs=1e-3)
    assert eng.state.accepted == []
    assert new_engine(toy[0], TOY_POLICY).cutoff == pytest.approx(18 / 21)


def test_new_engine_rejects_invalid():
    inst = Instance((), uniform_instance(1, 3, [1]).attributes, (KnapsackSpec("budget", 1.0),), 5)
    with pytest.raises(InvalidInstance):
        new_engine(inst, TOY_POLICY)


def test_toy_trace(toy):
    inst, arrivals = toy
    res = run_stream(inst, TOY_POLICY, arrivals)
    got = [(d.person, d.accepted_teams) for d in res.decisions[:7]]
    assert got == [
        ("A1", ["T1", "T2"]),
        ("A2", ["T3"]),
        ("C1", ["T1", "T2"]),
        ("B1", ["T3", "T1"]),
        ("B2", ["T2"]),
        ("B3", []),
        ("C2", ["T3"]),
    ]
    b3 = res.decisions[5]
    assert all(e.gain == pytest.approx(math.sqrt(2) - 1, abs=1e-9) for e in b3.edges)
    assert res.interviews_used == 7
    assert all(e.reason == "team_full" for d in res.decisions[7:] for e in d.edges)
    assert interviews_to_fill(res.decisions, inst) == 7


def test_edges_are_logged_in_gain_order(toy):
    inst, arrivals = toy
    res = run_stream(inst, TOY_POLICY, arrivals)
    a2 = res.decisions[1]
    assert [e.team for e in a2.edges] == ["T3", "T1", "T2"]
    assert a2.edges[0].gain >= a2.edges[1].gain


def test_full_teams_reject_everything(toy):
    inst, arrivals = toy
    eng = Engine(inst, TOY_POLICY)
    for p in arrivals[:7]:
        process_arrival(eng, p)
    dec = process_arrival(eng, Person("late", {"cluster": 0}))
    assert dec.accepted_teams == []
    assert {e.reason for e in dec.edges} == {"team_full"}


def test_unit_costs_never_trigger_big_item(equal_instance):
    res = run_stream(equal_instance, alpha_policy(equal_instance, 1.0), people([0, 1, 2] * 5))
    assert not any(e.big_item for d in res.decisions for e in d.edges)


def test_big_item_terminates():
    teams = (TeamSpec("T1", 1),)
    inst = Instance(teams, uniform_instance(1, 1, [4.0]).attributes, (KnapsackSpec("team", 1.0, "T1"),), 5)
    res = run_stream(inst, ThresholdPolicy(1.0, 1.0, 1, 1.0), people([0, 0, 0]))
    assert res.decisions[0].edges[0].big_item
    assert len(res.state.accepted) == 1
    assert res.decisions[1].edges[0].reason == "engine_terminated"
    with pytest.raises(EngineClosed):
        eng = Engine(inst, ThresholdPolicy(1.0, 1.0, 1, 1.0))
        eng.process(people([0])[0])
        eng.process(people([0], prefix="Q")[0])


def test_max_arrivals_enforced():
    inst = uniform_instance(1, 3, [1], max_arrivals=2)
    with pytest.raises(EngineClosed):
        run_stream(inst, TOY_POLICY, people([0, 0, 0]))


def test_equal_utility_any_order_reaches_optimum(equal_instance):
    pol = alpha_policy(equal_instance, 1.0)
    for labels in ([0, 1, 2], [2, 2, 2, 1, 1, 0], [1, 1, 1, 1, 0, 0, 2]):
        res = run_stream(equal_instance, pol, people(labels))
        assert total_value(res.state) == 30.0


def test_empty_arrivals(equal_instance):
    res = run_stream(equal_instance, alpha_policy(equal_instance, 1.0), [])
    assert res.interviews_used == 0 and res.state.accepted == []


def test_budget_knapsack_blocks():
    teams = (TeamSpec("T1", 3, 0, bonus=2.0), TeamSpec("T2", 3, 0, bonus=2.0))
    base = uniform_instance(2, 3, [1, 1, 1])
    ks = base.knapsacks + (KnapsackSpec("budget", 5.0),)
    inst = Instance(teams, base.attributes, ks, 20, budget=5.0)
    res = run_stream(inst, ThresholdPolicy(1.0, 0.5, inst.d, 3.0), people([0, 1, 2]))
    assert len(res.state.accepted) == 2
    assert res.state.budget_spent == 4.0
    assert not any(e.big_item for d in res.decisions for e in d.edges)
    assert "budget_exhausted" in {e.reason for d in res.decisions for e in d.edges}


def test_team_order_variant(toy):
    inst, arrivals = toy
    res = run_stream(inst, TOY_POLICY, arrivals, edge_order="team")
    assert [e.team for e in res.decisions[1].edges] == ["T1", "T2", "T3"]
    with pytest.raises(ValueError):
        Engine(inst, TOY_POLICY, edge_order="random")


def test_decision_log_is_deterministic(toy):
    inst, arrivals = toy
    logs = [json.dumps([d.to_record() for d in run_stream(inst, TOY_POLICY, arrivals).decisions]) for _ in range(2)]
    assert logs[0] == logs[1]
