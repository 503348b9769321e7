"""Diversity and cost metrics: team entropy, entropy gain, prices of diversity."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

from .core import DivmatchError, MatchState
from .objective import total_value


class UndefinedGain(DivmatchError):
    code = "undefined_gain"


class MismatchedRuns(DivmatchError):
    code = "mismatched_instances"


def team_entropy(counts: Sequence[int]) -> float:
    """Shannon entropy (nats) of cluster proportions."""
    n = sum(counts)
    if n < 1:
        raise ValueError("entropy of an empty team is undefined")
    return -sum(c / n * math.log(c / n) for c in counts if c > 0) + 0.0


def entropy_gain(diverse_mean: float, baseline_mean: float) -> float:
    if baseline_mean <= 0:
        raise UndefinedGain("baseline mean entropy is zero")
    return diverse_mean / baseline_mean


def pod_num(diverse_interviews: int, baseline_interviews: int) -> float:
    if baseline_interviews < 1:
        raise ValueError("baseline interviewed nobody")
    return diverse_interviews / baseline_interviews


def pod_util(baseline_utility: float, diverse_utility: float) -> float:
    if diverse_utility <= 0:
        raise ValueError("diverse utility must be positive")
    return baseline_utility / diverse_utility


def team_entropies(state: MatchState, attr: int = 0) -> dict[str, float]:
    """Entropy of every non-empty team; empty teams are left out."""
    out = {}
    for t in state.instance.teams:
        counts = state.cluster_counts(t.id, attr)
        if sum(counts):
            out[t.id] = team_entropy(counts)
    return out


def mean_entropy(state: MatchState, attr: int = 0) -> float:
    values = list(team_entropies(state, attr).values())
    return sum(values) / len(values) if values else 0.0


def quota_violations(state: MatchState) -> int:
    return sum(1 for load, t in zip(state.team_load, state.instance.teams) if load < t.quota_min)


@dataclass
class RunReport:
    utility: float
    raw_weight: float
    team_entropy: dict[str, dict[str, float]]
    mean_entropy: dict[str, float]
    interviews_used: int
    violations: int
    baseline_utility: float | None = None
    baseline_mean_entropy: dict[str, float] = field(default_factory=dict)
    baseline_interviews: int | None = None
    pod_num: float | None = None
    pod_util: float | None = None
    entropy_gain: dict[str, float | None] = field(default_factory=dict)
    oracle_value: float | None = None
    competitive_ratio: float | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def build_report(
    diverse: MatchState,
    diverse_interviews: int,
    baseline: MatchState | None = None,
    baseline_interviews: int | None = None,
    oracle_value: float | None = None,
) -> RunReport:
    inst = diverse.instance
    if baseline is not None and baseline.instance.digest() != inst.digest():
        raise MismatchedRuns("diverse and baseline runs use different instances")
    names = inst.attributes.names
    report = RunReport(
        utility=total_value(diverse),
        raw_weight=diverse.raw_weight(),
        team_entropy={n: team_entropies(diverse, a) for a, n in enumerate(names)},
        mean_entropy={n: mean_entropy(diverse, a) for a, n in enumerate(names)},
        interviews_used=diverse_interviews,
        violations=quota_violations(diverse),
    )
    if baseline is not None:
        report.baseline_utility = total_value(baseline)
        report.baseline_mean_entropy = {n: mean_entropy(baseline, a) for a, n in enumerate(names)}
        if baseline_interviews is not None:
            report.baseline_interviews = baseline_interviews
            if baseline_interviews >= 1:
                report.pod_num = pod_num(diverse_interviews, baseline_interviews)
        if report.raw_weight > 0:
            report.pod_util = pod_util(baseline.raw_weight(), report.raw_weight)
        for n in names:
            try:
                report.entropy_gain[n] = entropy_gain(report.mean_entropy[n], report.baseline_mean_entropy[n])
            except UndefinedGain:
                report.entropy_gain[n] = None
                report.flags.append(f"undefined_gain:{n}")
    if oracle_value is not None:
        report.oracle_value = oracle_value
        report.competitive_ratio = report.utility / oracle_value if oracle_value > 0 else None
    return report
