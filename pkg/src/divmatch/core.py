"""Shared domain types: instances, people, edges and the running match state.

Notation used across the package:

    N       number of teams                    len(instance.teams)
    K_a     clusters of attribute a            len(attribute.clusters)
    M       maximum number of arrivals         instance.max_arrivals
    d       number of knapsack constraints     len(instance.knapsacks)
    R+/R-   team capacity / team quota         TeamSpec.capacity_max / quota_min
    L+      teams a person may join            Person.max_teams
    w_kj    utility of cluster k for team j    Attribute.weights[k][j]
    c^B     acceptance bonus paid per edge     TeamSpec.bonus
    c^S     screening cost (reporting only)    Person.screening_cost
    B       monetary budget                    Instance.budget
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Literal, Mapping, Sequence

SCHEMA_INSTANCE = "divmatch.instance/1"
REFRESH_EVERY = 4096
FEAS_EPS = 1e-9

KnapsackKind = Literal["team", "person", "budget"]

_FULL_REASON = {"team": "team_full", "person": "person_full", "budget": "budget_exhausted"}


class DivmatchError(Exception):
    """Base class for errors raised by the package."""


class InvalidInstance(DivmatchError):
    def __init__(self, issues: list[ValidationIssue]):
        self.issues = issues
        super().__init__("; ".join(f"{i.code}: {i.message}" for i in issues))


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


@dataclass(frozen=True)
class TeamSpec:
    id: str
    capacity_max: int
    quota_min: int = 0
    bonus: float | None = None


@dataclass(frozen=True)
class Attribute:
    """One clustering of people, e.g. country of origin.

    ``weights[k][j]`` is the utility a member of cluster ``k`` brings to team
    ``j`` (teams in instance order). ``mix`` is the attribute's share of the
    team objective; mixes across attributes sum to one.
    """

    name: str
    clusters: tuple[str, ...]
    weights: tuple[tuple[float, ...], ...]
    mix: float = 1.0

    @property
    def k(self) -> int:
        return len(self.clusters)

    def cluster_id(self, label: str | int) -> int:
        if isinstance(label, str) and label in self.clusters:
            return self.clusters.index(label)
        try:
            idx = int(label)
        except ValueError:
            raise KeyError(f"unknown cluster {label!r} for attribute {self.name!r}") from None
        if not 0 <= idx < self.k:
            raise KeyError(f"cluster {label!r} out of range for attribute {self.name!r}")
        return idx


@dataclass(frozen=True)
class AttributeSet:
    entries: tuple[Attribute, ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: int) -> Attribute:
        return self.entries[idx]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.entries)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class KnapsackSpec:
    """A linear budget over accepted edges.

    team    cost 1 for edges into ``team``, bound defaults to that team's R+
    person  cost 1 for every edge of the arriving person, bound is the
            person's L+ (``bound`` is the fallback when L+ is unset)
    budget  cost is the team bonus c^B, bound is the monetary budget B
    """

    kind: KnapsackKind
    bound: float
    team: str | None = None


@dataclass(frozen=True)
class Person:
    id: str
    labels: Mapping[str, int]
    max_teams: int | None = None
    screening_cost: float | None = None
    bonus: float | None = None
    # per-team utility override; when absent the cluster weights apply
    weights: Mapping[str, float] | None = None

    def label_tuple(self, attributes: AttributeSet) -> tuple[int, ...]:
        return tuple(self.labels[a.name] for a in attributes)


@dataclass(frozen=True)
class Edge:
    person: str
    team: str
    # per-attribute utility and cluster of the person, in attribute order
    weights: tuple[float, ...]
    labels: tuple[int, ...]
    costs: tuple[float, ...]

    @property
    def weight(self) -> float:
        """Scalar w_ij (all attributes agree unless overridden per attribute)."""
        return self.weights[0]


@dataclass(frozen=True)
class Instance:
    teams: tuple[TeamSpec, ...]
    attributes: AttributeSet
    knapsacks: tuple[KnapsackSpec, ...]
    max_arrivals: int
    budget: float | None = None

    @cached_property
    def team_index(self) -> dict[str, int]:
        return {t.id: j for j, t in enumerate(self.teams)}

    @property
    def n_teams(self) -> int:
        return len(self.teams)

    @property
    def d(self) -> int:
        return len(self.knapsacks)

    def team(self, team_id: str) -> TeamSpec:
        try:
            return self.teams[self.team_index[team_id]]
        except KeyError:
            raise KeyError(f"unknown team {team_id!r}") from None

    def weight(self, attr: int, cluster: int, team: int) -> float:
        return self.attributes[attr].weights[cluster][team]

    @cached_property
    def _team_costs(self) -> dict[str, tuple[float, ...]]:
        return {t.id: self._costs(t, t.bonus) for t in self.teams}

    def _costs(self, spec: TeamSpec, bonus: float | None) -> tuple[float, ...]:
        costs = []
        for ks in self.knapsacks:
            if ks.kind == "team":
                costs.append(1.0 if ks.team == spec.id else 0.0)
            elif ks.kind == "person":
                costs.append(1.0)
            else:
                costs.append(float(bonus or 0.0))
        return tuple(costs)

    def edge_costs(self, person: Person, team_id: str) -> tuple[float, ...]:
        if person.bonus is None:
            try:
                return self._team_costs[team_id]
            except KeyError:
                raise KeyError(f"unknown team {team_id!r}") from None
        return self._costs(self.team(team_id), person.bonus)

    def make_edge(self, person: Person, team_id: str) -> Edge:
        j = self.team_index[team_id]
        labels = person.label_tuple(self.attributes)
        if person.weights is not None and team_id in person.weights:
            w = float(person.weights[team_id])
            weights = tuple(w for _ in self.attributes)
        else:
            weights = tuple(a.weights[k][j] for a, k in zip(self.attributes, labels))
        return Edge(person.id, team_id, weights, labels, self.edge_costs(person, team_id))

    def knapsack_bound(self, idx: int, person: Person | None = None) -> float:
        ks = self.knapsacks[idx]
        if ks.kind == "person" and person is not None and person.max_teams is not None:
            return float(person.max_teams)
        return ks.bound

    def digest(self) -> str:
        blob = json.dumps(instance_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def team_knapsacks(teams: Sequence[TeamSpec]) -> tuple[KnapsackSpec, ...]:
    """One capacity knapsack per team, so d = N by default."""
    return tuple(KnapsackSpec("team", float(t.capacity_max), t.id) for t in teams)


def single_attribute(
    weights: Sequence[float] | Sequence[Sequence[float]],
    n_teams: int,
    name: str = "cluster",
    clusters: Sequence[str] | None = None,
) -> AttributeSet:
    """Build a one-attribute set; a flat weight list is shared by all teams."""
    rows = [_weight_row(w, n_teams) for w in weights]
    names = tuple(clusters) if clusters is not None else tuple(str(k) for k in range(len(rows)))
    return AttributeSet((Attribute(name, names, tuple(rows), 1.0),))


def uniform_instance(
    n_teams: int,
    capacity: int,
    weights: Sequence[float],
    *,
    quota: int | None = None,
    max_arrivals: int = 100,
    max_teams: int | None = None,
) -> Instance:
    """N identical teams over one attribute, the layout of the simulation studies."""
    width = len(str(n_teams))
    teams = tuple(
        TeamSpec(f"T{j + 1:0{width}d}", capacity, capacity if quota is None else quota)
        for j in range(n_teams)
    )
    return Instance(teams, single_attribute(weights, n_teams), team_knapsacks(teams), max_arrivals)


def _weight_row(w: Any, n_teams: int) -> tuple[float, ...]:
    if isinstance(w, (int, float)):
        return tuple(float(w) for _ in range(n_teams))
    return tuple(float(x) for x in w)


def validate(instance: Instance) -> list[ValidationIssue]:
    """Return every invariant violation; an empty list means the instance is usable."""
    issues: list[ValidationIssue] = []

    def bad(code: str, message: str) -> None:
        issues.append(ValidationIssue(code, message))

    if not instance.teams:
        bad("no_teams", "instance has no teams")
    seen: set[str] = set()
    for t in instance.teams:
        if t.id in seen:
            bad("duplicate_team", f"team {t.id!r} declared twice")
        seen.add(t.id)
        if t.capacity_max < 1:
            bad("bad_capacity", f"team {t.id!r} has capacity {t.capacity_max}")
        if t.quota_min < 0:
            bad("negative_quota", f"team {t.id!r} has quota {t.quota_min}")
        if t.quota_min > t.capacity_max:
            bad("quota_exceeds_capacity", f"team {t.id!r}: quota {t.quota_min} > capacity {t.capacity_max}")
        if t.bonus is not None and t.bonus < 0:
            bad("negative_bonus", f"team {t.id!r} has bonus {t.bonus}")

    if not len(instance.attributes):
        bad("no_attributes", "instance has no attributes")
    names = [a.name for a in instance.attributes]
    if len(set(names)) != len(names):
        bad("duplicate_attribute", "attribute names must be unique")
    for a in instance.attributes:
        if a.k < 1:
            bad("no_clusters", f"attribute {a.name!r} has no clusters")
        if not 0.0 <= a.mix <= 1.0:
            bad("bad_mix", f"attribute {a.name!r} mix {a.mix} outside [0, 1]")
        if len(a.weights) != a.k or any(len(row) != len(instance.teams) for row in a.weights):
            bad("weights_shape", f"attribute {a.name!r} weights must be {a.k} x {len(instance.teams)}")
        elif any(w < 0 or not math.isfinite(w) for row in a.weights for w in row):
            bad("negative_weight", f"attribute {a.name!r} has a negative or non-finite weight")
    if len(instance.attributes) and abs(sum(a.mix for a in instance.attributes) - 1.0) > 1e-9:
        bad("mix_not_normalized", "attribute mixes must sum to 1")

    if not instance.knapsacks:
        bad("no_knapsacks", "at least one knapsack constraint is required (d >= 1)")
    for ks in instance.knapsacks:
        if ks.kind not in ("team", "person", "budget"):
            bad("unknown_knapsack_kind", f"knapsack kind {ks.kind!r}")
        if ks.kind == "team" and ks.team not in seen:
            bad("unknown_knapsack_team", f"knapsack refers to unknown team {ks.team!r}")
        if not ks.bound > 0:
            bad("bad_knapsack_bound", f"knapsack bound {ks.bound} must be positive")
    if instance.budget is not None and instance.budget < 0:
        bad("negative_budget", f"budget {instance.budget} is negative")
    if instance.max_arrivals < 1:
        bad("bad_max_arrivals", f"max_arrivals {instance.max_arrivals} must be >= 1")
    return issues


def check(instance: Instance) -> Instance:
    issues = validate(instance)
    if issues:
        raise InvalidInstance(issues)
    return instance


def check_person(instance: Instance, person: Person) -> None:
    for a in instance.attributes:
        if a.name not in person.labels:
            raise InvalidInstance([ValidationIssue("missing_label", f"person {person.id!r} lacks {a.name!r}")])
        k = person.labels[a.name]
        if not 0 <= k < a.k:
            raise InvalidInstance([ValidationIssue("unknown_cluster", f"person {person.id!r}: {a.name}={k}")])
    if person.max_teams is not None and person.max_teams < 1:
        raise InvalidInstance([ValidationIssue("bad_max_teams", f"person {person.id!r}: L+ {person.max_teams}")])


# -- match state ----------------------------------------------------------------


@dataclass
class MatchState:
    """The running allocation S plus accumulators for O(#attributes) gains.

    ``sums[j][a][k]`` is the total weight of accepted members of cluster ``k``
    (attribute ``a``) in team ``j``.
    """

    instance: Instance
    accepted: list[Edge] = field(default_factory=list)
    sums: list[list[list[float]]] = field(default_factory=list)
    team_load: list[int] = field(default_factory=list)
    person_load: dict[str, int] = field(default_factory=dict)
    consumed: list[float] = field(default_factory=list)
    # person-kind knapsacks are tracked per person
    person_consumed: dict[tuple[int, str], float] = field(default_factory=dict)
    budget_spent: float = 0.0

    @classmethod
    def empty(cls, instance: Instance) -> MatchState:
        state = cls(instance)
        state.reset()
        return state

    def reset(self) -> None:
        inst = self.instance
        self.accepted = []
        self.sums = [[[0.0] * a.k for a in inst.attributes] for _ in inst.teams]
        self.team_load = [0] * inst.n_teams
        self.person_load = {}
        self.consumed = [0.0] * inst.d
        self.person_consumed = {}
        self.budget_spent = 0.0

    def add(self, edge: Edge) -> None:
        self._apply(edge)
        if len(self.accepted) % REFRESH_EVERY == 0:
            self.refresh()

    def _apply(self, edge: Edge) -> None:
        inst = self.instance
        j = inst.team_index[edge.team]
        team_sums = self.sums[j]
        for a, (k, w) in enumerate(zip(edge.labels, edge.weights)):
            team_sums[a][k] += w
        self.team_load[j] += 1
        self.person_load[edge.person] = self.person_load.get(edge.person, 0) + 1
        for idx, (ks, c) in enumerate(zip(inst.knapsacks, edge.costs)):
            if ks.kind == "person":
                key = (idx, edge.person)
                self.person_consumed[key] = self.person_consumed.get(key, 0.0) + c
            else:
                self.consumed[idx] += c
            if ks.kind == "budget":
                self.budget_spent += c
        self.accepted.append(edge)

    def refresh(self) -> None:
        """Recompute every accumulator from ``accepted`` to shed float drift."""
        edges = self.accepted
        self.reset()
        for e in edges:
            self._apply(e)

    def knapsack_used(self, idx: int, person: str | None = None) -> float:
        if self.instance.knapsacks[idx].kind == "person":
            return self.person_consumed.get((idx, person), 0.0) if person is not None else 0.0
        return self.consumed[idx]

    def blocking_reason(self, edge: Edge, person: Person) -> str | None:
        """Why adding ``edge`` would break a constraint, or None if it fits."""
        inst = self.instance
        j = inst.team_index[edge.team]
        if self.team_load[j] >= inst.teams[j].capacity_max:
            return "team_full"
        if person.max_teams is not None and self.person_load.get(person.id, 0) >= person.max_teams:
            return "person_full"
        for idx, (ks, c) in enumerate(zip(inst.knapsacks, edge.costs)):
            if c > 0 and self.knapsack_used(idx, person.id) + c > inst.knapsack_bound(idx, person) + FEAS_EPS:
                return _FULL_REASON[ks.kind]
        if inst.budget is not None:
            spend = sum(c for ks, c in zip(inst.knapsacks, edge.costs) if ks.kind == "budget")
            if self.budget_spent + spend > inst.budget + FEAS_EPS:
                return "budget_exhausted"
        return None

    def members(self, team_id: str) -> list[Edge]:
        return [e for e in self.accepted if e.team == team_id]

    def cluster_counts(self, team_id: str, attr: int = 0) -> list[int]:
        counts = [0] * self.instance.attributes[attr].k
        for e in self.accepted:
            if e.team == team_id:
                counts[e.labels[attr]] += 1
        return counts

    def raw_weight(self) -> float:
        """Plain sum of accepted edge weights (no diversity reward)."""
        return sum(e.weight for e in self.accepted)

    def all_full(self) -> bool:
        return all(load >= t.capacity_max for load, t in zip(self.team_load, self.instance.teams))

    def copy(self) -> MatchState:
        clone = MatchState.empty(self.instance)
        for e in self.accepted:
            clone.add(e)
        return clone


def state_from_edges(instance: Instance, edges: Iterable[Edge]) -> MatchState:
    state = MatchState.empty(instance)
    for e in edges:
        state.add(e)
    return state


# -- serialization --------------------------------------------------------------


def instance_to_dict(instance: Instance) -> dict[str, Any]:
    return {
        "schema": SCHEMA_INSTANCE,
        "teams": [
            {"id": t.id, "capacity_max": t.capacity_max, "quota_min": t.quota_min, "bonus": t.bonus}
            for t in instance.teams
        ],
        "attributes": [{"name": a.name, "clusters": list(a.clusters), "mix": a.mix} for a in instance.attributes],
        "weights": {a.name: [list(row) for row in a.weights] for a in instance.attributes},
        "knapsacks": [{"kind": k.kind, "bound": k.bound, "team": k.team} for k in instance.knapsacks],
        "budget": instance.budget,
        "max_arrivals": instance.max_arrivals,
    }


def instance_from_dict(doc: Mapping[str, Any]) -> Instance:
    """Parse an instance document; raises KeyError/TypeError/ValueError on malformed input."""
    schema = doc.get("schema", SCHEMA_INSTANCE)
    if schema != SCHEMA_INSTANCE:
        raise ValueError(f"unsupported instance schema {schema!r}")
    teams = tuple(
        TeamSpec(
            str(t["id"]),
            int(t["capacity_max"]),
            int(t.get("quota_min", 0)),
            None if t.get("bonus") is None else float(t["bonus"]),
        )
        for t in doc["teams"]
    )
    raw_attrs = doc.get("attributes") or [{"name": "cluster"}]
    weights = doc["weights"]
    attrs = []
    for entry in raw_attrs:
        name = str(entry["name"])
        matrix = weights[name] if isinstance(weights, Mapping) else weights
        rows = tuple(_weight_row(w, len(teams)) for w in matrix)
        clusters = tuple(str(c) for c in entry.get("clusters", range(len(rows))))
        attrs.append(Attribute(name, clusters, rows, float(entry.get("mix", 1.0 / len(raw_attrs)))))
    budget = doc.get("budget")
    if "knapsacks" in doc and doc["knapsacks"] is not None:
        knapsacks = tuple(
            KnapsackSpec(
                k["kind"],
                float(k["bound"]) if k.get("bound") is not None else _default_bound(k, teams, budget),
                k.get("team"),
            )
            for k in doc["knapsacks"]
        )
    else:
        knapsacks = team_knapsacks(teams)
        if budget is not None:
            knapsacks += (KnapsackSpec("budget", float(budget)),)
    return Instance(
        teams,
        AttributeSet(tuple(attrs)),
        knapsacks,
        int(doc.get("max_arrivals", 100)),
        None if budget is None else float(budget),
    )


def _default_bound(k: Mapping[str, Any], teams: Sequence[TeamSpec], budget: float | None) -> float:
    if k["kind"] == "team":
        for t in teams:
            if t.id == k.get("team"):
                return float(t.capacity_max)
        return 0.0
    if k["kind"] == "budget" and budget is not None:
        return float(budget)
    return math.inf


def person_to_dict(person: Person, attributes: AttributeSet) -> dict[str, Any]:
    return {
        "id": person.id,
        "labels": {a.name: a.clusters[person.labels[a.name]] for a in attributes},
        "max_teams": person.max_teams,
    }
