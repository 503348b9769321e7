import json
from dataclasses import replace

import pytest

from divmatch.cli import _clean
from divmatch.sim import (
    ArrivalModel,
    EnumerationTooLarge,
    ExperimentConfig,
    MultiAttributeConfig,
    alpha_sweep,
    estimate_interviews_to_fill,
    expected_accepted,
    multi_attribute_instance,
    multi_attribute_roster,
    multinomial_prob,
    run_experiment,
    run_multi_attribute_experiment,
    sample_arrivals,
    theta_grid,
)


def test_degenerate_theta():
    arr = sample_arrivals(ArrivalModel.single([1, 0, 0], 5))
    assert [p.labels["cluster"] for p in arr] == [0] * 5
    assert sample_arrivals(ArrivalModel.single([1 / 3] * 3, 0)) == []


def test_seeded_sampling_is_reproducible():
    model = ArrivalModel.single([1 / 3] * 3, 100, seed=42)
    a, b = sample_arrivals(model), sample_arrivals(model)
    assert a == b and len(a) == 100
    assert sample_arrivals(replace(model, seed=43)) != a


def test_given_and_worst_case_orderings(worst_instance):
    given = ArrivalModel.single([1, 0, 0], 3, ordering="given", labels=({"cluster": 2}, {"cluster": 0}, {"cluster": 1}))
    assert [p.labels["cluster"] for p in sample_arrivals(given)] == [2, 0, 1]
    worst = ArrivalModel.single([0.4, 0.3, 0.3], 30, seed=1, ordering="worst_case")
    labels = [p.labels["cluster"] for p in sample_arrivals(worst, worst_instance)]
    zeros = labels.count(0)
    assert labels[:zeros] == [0] * zeros
    with pytest.raises(ValueError):
        sample_arrivals(worst)


def test_invalid_theta():
    with pytest.raises(ValueError):
        ArrivalModel.single([0.5, 0.6], 3)


def test_multinomial_prob():
    assert multinomial_prob([6, 3, 1], [0.75, 0.16, 0.09]) == pytest.approx(0.055, abs=1e-3)
    assert multinomial_prob([0, 0, 0], [0.2, 0.3, 0.5]) == 1.0
    assert multinomial_prob([2, 0], [0.5, 0.5]) == pytest.approx(0.25)
    assert multinomial_prob([1, 1], [1.0, 0.0]) == 0.0


def test_expected_accepted():
    # with unit caps the expectation is sum_k P(count_k >= 1)
    closed = sum(1 - (1 - p) ** 10 for p in (0.75, 0.16, 0.09))
    assert expected_accepted([0.75, 0.16, 0.09], [1, 1, 1], 10) == pytest.approx(closed, abs=1e-12)
    assert expected_accepted([0.75, 0.16, 0.09], [1, 1, 1], 10) == pytest.approx(2.4357, abs=1e-4)
    assert expected_accepted([1 / 3] * 3, [1, 1, 1], 10) == pytest.approx(2.95, abs=0.02)
    assert expected_accepted([0.5, 0.5], [1, 1], 0) == 0.0
    assert expected_accepted([0.2, 0.3, 0.5], [7, 7, 7], 7) == pytest.approx(7.0)
    values = [expected_accepted([0.75, 0.16, 0.09], [1, 1, 1], m) for m in range(8)]
    assert values == sorted(values) and values[-1] <= 3
    with pytest.raises(EnumerationTooLarge):
        expected_accepted([0.1] * 10, [1] * 10, 10**4)


def test_impossible_coverage_reports_violations(equal_instance):
    cfg = ExperimentConfig(equal_instance, ArrivalModel.single([1, 0, 0], 40), alpha=1.0, runs=3)
    est = estimate_interviews_to_fill(cfg)
    assert est["median"] == 40
    assert est["violations"] == 30


def test_experiment_is_deterministic(unequal_instance):
    cfg = ExperimentConfig(unequal_instance, ArrivalModel.single([1 / 3] * 3, 60, seed=7), runs=5)
    a = json.dumps(_clean(run_experiment(cfg).aggregate), sort_keys=True)
    b = json.dumps(_clean(run_experiment(cfg).aggregate), sort_keys=True)
    assert a == b


def test_parallel_matches_serial(unequal_instance):
    cfg = ExperimentConfig(unequal_instance, ArrivalModel.single([1 / 3] * 3, 60, seed=3), runs=6)
    serial = run_experiment(cfg)
    parallel = run_experiment(replace(cfg, workers=2))
    assert [r.to_dict() for r in serial.reports] == [r.to_dict() for r in parallel.reports]


def test_alpha_sweep_shape(unequal_instance):
    cfg = ExperimentConfig(unequal_instance, ArrivalModel.single([1 / 3] * 3, 60), runs=10)
    rows = alpha_sweep(cfg, [0.4, 0.7, 1.0])
    utilities = [r["median_utility"] for r in rows]
    assert utilities[1] == pytest.approx(41.46, abs=0.05)
    assert utilities[1] > utilities[0] and utilities[1] > utilities[2]


def test_theta_grid_rows(skewed_instance):
    cfg = ExperimentConfig(skewed_instance, ArrivalModel.single([1 / 3] * 3, 40), runs=3, baseline=False)
    rows = theta_grid(cfg, step=0.5)
    assert len(rows) == 6
    assert {"theta_0", "theta_1", "median_interviews", "violation_rate"} == set(rows[0])
    assert all(0 <= r["violation_rate"] <= 1 for r in rows)


def test_roster_counts():
    roster = multi_attribute_roster()
    assert len(roster) == 50
    countries = [sum(1 for p in roster if p.labels["country"] == c) for c in range(5)]
    assert countries == [20, 10, 10, 5, 5]
    assert sum(1 for p in roster if p.labels["gender"] == 1) == 20
    assert sorted(p.max_teams for p in roster) == sorted([4] * 17 + [5] * 18 + [6] * 15)
    inst = multi_attribute_instance()
    assert sorted(t.capacity_max for t in inst.teams) == [3] * 14 + [4] * 16 + [5] * 10


def test_single_attribute_mix_degenerates():
    out = run_multi_attribute_experiment(MultiAttributeConfig(runs=2, mix=1.0))
    assert out["policy"]["alpha"] == 0.53
    assert out["aggregate"]["runs"] == 2
