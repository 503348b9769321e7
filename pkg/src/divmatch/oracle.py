"""Offline references: exact search, offline greedy and first-come-first-serve."""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Literal, Sequence

from .core import DivmatchError, Edge, Instance, MatchState, Person, check_person
from .objective import allocation_value, marginal_gain

MAX_NODES = 10**7

Method = Literal["brute_force", "exchangeable_fast_path", "offline_greedy", "fcfs"]


class SearchSpaceTooLarge(DivmatchError):
    code = "search_space_too_large"


@dataclass(frozen=True)
class OracleResult:
    allocation: tuple[Edge, ...]
    value: float
    method: Method

    def team_members(self, team_id: str) -> list[str]:
        return [e.person for e in self.allocation if e.team == team_id]


def _exchangeable(instance: Instance, pool: Sequence[Person]) -> bool:
    """People of one cluster (label tuple) are interchangeable and teams decouple."""
    if any(ks.kind != "team" for ks in instance.knapsacks) or instance.budget is not None:
        return False
    return all(p.max_teams is None and p.weights is None for p in pool)


def brute_force_offline(instance: Instance, pool: Sequence[Person], max_nodes: int = MAX_NODES) -> OracleResult:
    """Maximum-value feasible allocation of ``pool``.

    With cluster-uniform weights and no coupling constraints, every team is
    optimised independently over per-cluster head counts. Otherwise a
    depth-first search over per-team member subsets is run, refusing search
    spaces larger than ``max_nodes``.
    """
    for p in pool:
        check_person(instance, p)
    if not pool:
        return OracleResult((), 0.0, "brute_force")
    if _exchangeable(instance, pool):
        return _count_vector_search(instance, pool)
    return _subset_search(instance, pool, max_nodes)


def _count_vector_search(instance: Instance, pool: Sequence[Person]) -> OracleResult:
    by_type: dict[tuple[int, ...], list[Person]] = defaultdict(list)
    for p in pool:
        by_type[p.label_tuple(instance.attributes)].append(p)
    types = sorted(by_type)
    attrs = instance.attributes
    chosen: list[Edge] = []
    for j, team in enumerate(instance.teams):
        cap = team.capacity_max
        ranges = [range(min(len(by_type[t]), cap) + 1) for t in types]
        best, best_counts = -1.0, None
        for counts in itertools.product(*ranges):
            if sum(counts) > cap:
                continue
            value = 0.0
            for a, attr in enumerate(attrs):
                sums = [0.0] * attr.k
                for t, c in zip(types, counts):
                    sums[t[a]] += c * attr.weights[t[a]][j]
                value += attr.mix * sum(math.sqrt(s) for s in sums)
            if value > best + 1e-12:
                best, best_counts = value, counts
        for t, c in zip(types, best_counts or ()):
            chosen.extend(instance.make_edge(p, team.id) for p in by_type[t][:c])
    return OracleResult(tuple(chosen), allocation_value(instance, chosen), "exchangeable_fast_path")


def search_space_size(instance: Instance, n_people: int) -> int:
    size = 1
    for t in instance.teams:
        size *= sum(math.comb(n_people, s) for s in range(min(t.capacity_max, n_people) + 1))
    return size


def _subset_search(instance: Instance, pool: Sequence[Person], max_nodes: int) -> OracleResult:
    size = search_space_size(instance, len(pool))
    if size > max_nodes:
        raise SearchSpaceTooLarge(f"search space {size} exceeds {max_nodes} nodes")

    teams = instance.teams
    options: list[list[tuple[float, tuple[Edge, ...]]]] = []
    for team in teams:
        edges = [instance.make_edge(p, team.id) for p in pool]
        subsets = []
        for s in range(min(team.capacity_max, len(pool)) + 1):
            for combo in itertools.combinations(edges, s):
                subsets.append((allocation_value(instance, combo), combo))
        subsets.sort(key=lambda vc: -vc[0])
        options.append(subsets)
    # optimistic completion: each remaining team at its unconstrained best
    tail = [0.0] * (len(teams) + 1)
    for j in range(len(teams) - 1, -1, -1):
        tail[j] = tail[j + 1] + options[j][0][0]

    people = {p.id: p for p in pool}
    best_value = -1.0
    best_alloc: tuple[Edge, ...] = ()
    state = MatchState.empty(instance)

    def fits(combo: tuple[Edge, ...]) -> bool:
        added = []
        ok = True
        for e in combo:
            if state.blocking_reason(e, people[e.person]) is not None:
                ok = False
                break
            state._apply(e)
            added.append(e)
        _undo(state, len(added))
        return ok

    def dfs(j: int, value: float, picked: list[Edge]) -> None:
        nonlocal best_value, best_alloc
        if j == len(teams):
            if value > best_value + 1e-12:
                best_value, best_alloc = value, tuple(picked)
            return
        for v, combo in options[j]:
            if value + v + tail[j + 1] <= best_value + 1e-12:
                break
            if not fits(combo):
                continue
            for e in combo:
                state._apply(e)
            picked.extend(combo)
            dfs(j + 1, value + v, picked)
            del picked[len(picked) - len(combo):]
            _undo(state, len(combo))

    dfs(0, 0.0, [])
    return OracleResult(best_alloc, allocation_value(instance, best_alloc), "brute_force")


def _undo(state: MatchState, n: int) -> None:
    if n:
        keep = state.accepted[: len(state.accepted) - n]
        state.accepted = keep
        state.refresh()


def offline_greedy(instance: Instance, pool: Sequence[Person]) -> OracleResult:
    """Repeatedly add the feasible edge of largest positive marginal gain."""
    for p in pool:
        check_person(instance, p)
    state = MatchState.empty(instance)
    candidates = [(j, i, instance.make_edge(p, t.id)) for j, t in enumerate(instance.teams) for i, p in enumerate(pool)]
    taken: set[tuple[int, int]] = set()
    while True:
        best = None
        best_gain = 1e-12
        for j, i, e in candidates:
            if (j, i) in taken or state.blocking_reason(e, pool[i]) is not None:
                continue
            g = marginal_gain(state, e)
            if g > best_gain + 1e-12:
                best, best_gain = (j, i, e), g
        if best is None:
            break
        taken.add(best[:2])
        state.add(best[2])
    return OracleResult(tuple(state.accepted), allocation_value(instance, state.accepted), "offline_greedy")


def fcfs_baseline(instance: Instance, arrivals: Sequence[Person]) -> tuple[OracleResult, int]:
    """Accept each arrival into every team (in team order) that still has room.

    Returns the allocation and the arrival index at which the last team filled
    (``len(arrivals)`` if some team never fills).
    """
    state = MatchState.empty(instance)
    filled_at = None
    for n, p in enumerate(arrivals, start=1):
        check_person(instance, p)
        for t in instance.teams:
            e = instance.make_edge(p, t.id)
            if state.blocking_reason(e, p) is None:
                state.add(e)
        if filled_at is None and state.all_full():
            filled_at = n
    result = OracleResult(tuple(state.accepted), allocation_value(instance, state.accepted), "fcfs")
    return result, filled_at if filled_at is not None else len(arrivals)


def fcfs_state(instance: Instance, arrivals: Sequence[Person]) -> tuple[MatchState, int]:
    result, used = fcfs_baseline(instance, arrivals)
    state = MatchState.empty(instance)
    for e in result.allocation:
        state.add(e)
    return state, used
