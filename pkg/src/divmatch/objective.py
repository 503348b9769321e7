"""Square-root diversity reward and its marginal gains.

For one attribute the value of team j is

    f(S_j) = sum_k sqrt( sum of w_ij over members i of cluster k )

and with several attributes the per-attribute values are mixed with weights
r_a that sum to one. A mixture of monotone submodular functions is monotone
submodular, so the streaming guarantees carry over unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .core import Edge, Instance, MatchState


@dataclass(frozen=True)
class GainBreakdown:
    total: float
    # (attribute name, unmixed contribution)
    per_attribute: tuple[tuple[str, float], ...]


def _team_sums_value(instance: Instance, team_sums: list[list[float]]) -> float:
    total = 0.0
    for attr, sums in zip(instance.attributes, team_sums):
        total += attr.mix * sum(math.sqrt(s) for s in sums)
    return total


def team_value(state: MatchState, team: str, instance: Instance | None = None) -> float:
    instance = instance or state.instance
    j = instance.team_index.get(team)
    if j is None:
        raise KeyError(f"unknown team {team!r}")
    return _team_sums_value(instance, state.sums[j])


def total_value(state: MatchState, instance: Instance | None = None) -> float:
    instance = instance or state.instance
    return sum(_team_sums_value(instance, sums) for sums in state.sums)


def marginal_gain(state: MatchState, edge: Edge, instance: Instance | None = None) -> float:
    """f(S + e) - f(S), touching only the clusters the edge lands in."""
    instance = instance or state.instance
    team_sums = state.sums[instance.team_index[edge.team]]
    gain = 0.0
    for a, attr in enumerate(instance.attributes):
        if edge.weights[a] == 0.0:
            continue
        s = team_sums[a][edge.labels[a]]
        gain += attr.mix * (math.sqrt(s + edge.weights[a]) - math.sqrt(s))
    return max(gain, 0.0)


def gain_breakdown(state: MatchState, edge: Edge, instance: Instance | None = None) -> GainBreakdown:
    instance = instance or state.instance
    team_sums = state.sums[instance.team_index[edge.team]]
    parts = []
    total = 0.0
    for a, attr in enumerate(instance.attributes):
        s = team_sums[a][edge.labels[a]]
        contribution = math.sqrt(s + edge.weights[a]) - math.sqrt(s)
        parts.append((attr.name, contribution))
        total += attr.mix * contribution
    return GainBreakdown(total, tuple(parts))


def singleton_gain(edge: Edge, instance: Instance) -> float:
    """Delta f(empty, e)."""
    return sum(attr.mix * math.sqrt(w) for attr, w in zip(instance.attributes, edge.weights))


def allocation_value(instance: Instance, edges: Iterable[Edge]) -> float:
    """Objective of an edge set computed from scratch, without a MatchState."""
    sums: dict[tuple[str, int, int], float] = {}
    for e in edges:
        for a, (k, w) in enumerate(zip(e.labels, e.weights)):
            key = (e.team, a, k)
            sums[key] = sums.get(key, 0.0) + w
    return sum(instance.attributes[a].mix * math.sqrt(s) for (_, a, _), s in sums.items())


def cluster_marginal_sequence(weight: float, count: int) -> list[float]:
    """Gains of the 1st, 2nd, ... member of one cluster: sqrt(m w) - sqrt((m-1) w)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [math.sqrt(m * weight) - math.sqrt((m - 1) * weight) for m in range(1, count + 1)]
